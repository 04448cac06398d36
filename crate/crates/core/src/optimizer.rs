//! Ground-state search on one embedded cell: exact enumeration when the state
//! space is small enough, otherwise basin hopping around discrete steepest
//! descents. All randomness flows from per-cell deterministic streams, so
//! results are independent of thread scheduling.

use std::collections::BTreeSet;

use num_rational::Ratio;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::couplings::CouplingMatrix;
use crate::energy::{
    cell_energy, delta_insert_with, delta_move_with, delta_remove_with, energy_per_site,
    site_potentials, EnergyBreakdown, EnergyError, ModelParams, Occupation,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizerError {
    #[error("state space holds {0} states, above the exhaustive limit {1}")]
    StateSpaceTooLarge(u128, u128),
    #[error("filling {0} gives a non-integer particle number on a {1}-site cell")]
    IncompatibleFilling(Ratio<i64>, usize),
    #[error("no cell in the set admits the requested filling")]
    NoCompatibleCells,
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Particle-number constraint of a search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ensemble {
    /// Fixed filling f; only cells with integer f·p are searchable.
    Canonical(Ratio<i64>),
    GrandCanonical,
}

impl Ensemble {
    /// Particle number on a p-site cell, if commensurate.
    pub fn particles(&self, p: usize) -> Option<u64> {
        match *self {
            Ensemble::Canonical(f) => {
                let n = f * Ratio::new(p as i64, 1);
                n.is_integer().then(|| *n.numer() as u64)
            }
            Ensemble::GrandCanonical => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub exhaustive_limit: u128,
    /// Consecutive non-improving descents before the search stops.
    pub restarts_without_improvement: u32,
    /// Random scramble operations per restart; `None` means one per site.
    pub scramble_moves: Option<usize>,
    pub rng_seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            exhaustive_limit: 2_000_000,
            restarts_without_improvement: 10,
            scramble_moves: None,
            rng_seed: 0,
        }
    }
}

/// Two energies within this relative distance count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// A descent step below this fraction of the configuration's gross energy is
/// rounding noise, not an improvement. Symmetry-equivalent couplings are
/// resummed independently and differ in the last bits, so two equivalent
/// states can each look "lower" than the other; a strict ΔE < 0 rule cycles
/// between them forever.
pub const STEP_NOISE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult<S> {
    pub best: Occupation,
    pub eps: EnergyBreakdown<S>,
    /// True iff the full state space was enumerated.
    pub exact: bool,
    pub descents_run: u64,
    /// (energy per site, config count) of minima within `DEGENERACY_TOL`
    /// relative of the minimum, bucketed by energy. Exhaustive searches count
    /// all states; basin hopping counts distinct visited minima.
    pub minima_histogram: Vec<(S, u64)>,
}

impl<S: Scalar> SearchResult<S> {
    /// Number of configurations degenerate with the ground state.
    pub fn ground_degeneracy(&self) -> u64 {
        self.minima_histogram.iter().map(|&(_, c)| c).sum()
    }
}

/// Occupancy ceiling for one search.
fn initial_cap<S: Scalar>(params: &ModelParams<S>, particles: Option<u64>) -> u32 {
    if params.is_hardcore() {
        1
    } else {
        match particles {
            // canonical: the total particle number is an absolute bound
            Some(n) => n.max(1) as u32,
            // grand canonical: a low start, raised automatically on saturation
            None => 4,
        }
    }
}

/// Number of occupation states, or None on overflow.
pub fn state_count(p: usize, particles: Option<u64>, cap: u32) -> Option<u128> {
    fn binom(n: u64, k: u64) -> Option<u128> {
        let k = k.min(n - k.min(n));
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc.checked_mul((n - i) as u128)?;
            acc /= (i + 1) as u128;
        }
        Some(acc)
    }
    match particles {
        Some(n) if cap == 1 => binom(p as u64, n),
        // compositions of n into p parts (cap ≥ n in canonical runs)
        Some(n) => binom(n + p as u64 - 1, p as u64 - 1),
        None => {
            let base = (cap as u128) + 1;
            let mut acc: u128 = 1;
            for _ in 0..p {
                acc = acc.checked_mul(base)?;
            }
            Some(acc)
        }
    }
}

/// Degenerate-minimum tracker: running minimum plus all candidates within the
/// relative window, pruned as the minimum drops.
struct MinTracker<S> {
    tol: S,
    min: Option<S>,
    energies: Vec<S>,
    configs: Vec<(S, Occupation)>,
}

const MAX_TRACKED_CONFIGS: usize = 1 << 16;

impl<S: Scalar> MinTracker<S> {
    fn new() -> Self {
        Self {
            tol: S::from_f64_lit(DEGENERACY_TOL),
            min: None,
            energies: Vec::new(),
            configs: Vec::new(),
        }
    }

    fn window(&self, m: S) -> S {
        self.tol * m.abs()
    }

    fn offer(&mut self, e: S, occ: &Occupation) {
        match self.min {
            None => {
                self.min = Some(e);
                self.energies.push(e);
                self.configs.push((e, occ.clone()));
            }
            Some(m) => {
                if e < m {
                    self.min = Some(e);
                    let w = self.window(e);
                    self.energies.retain(|&x| (x - e).abs() <= w);
                    self.configs.retain(|(x, _)| (*x - e).abs() <= w);
                    self.energies.push(e);
                    self.configs.push((e, occ.clone()));
                } else if (e - m).abs() <= self.window(m) {
                    self.energies.push(e);
                    if self.configs.len() < MAX_TRACKED_CONFIGS {
                        self.configs.push((e, occ.clone()));
                    }
                }
            }
        }
    }

    /// (lex-smallest minimal config, bucketed histogram).
    fn finish(mut self) -> (Occupation, Vec<(S, u64)>) {
        let m = self.min.expect("at least one state offered");
        let w = self.window(m);
        // lex-smallest among configs indistinguishable from the minimum
        let fuzz = m.abs() * S::from_f64_lit(1e-12);
        let best = self
            .configs
            .iter()
            .filter(|(e, _)| (*e - m).abs() <= fuzz)
            .map(|(_, occ)| occ)
            .min()
            .expect("minimum is tracked")
            .clone();
        self.energies.sort_by(|a, b| a.partial_cmp(b).expect("finite energies"));
        let mut histogram: Vec<(S, u64)> = Vec::new();
        for &e in &self.energies {
            if (e - m).abs() > w {
                continue;
            }
            match histogram.last_mut() {
                Some((anchor, count)) if (e - *anchor).abs() <= self.window(*anchor) => {
                    *count += 1
                }
                _ => histogram.push((e, 1)),
            }
        }
        (best, histogram)
    }
}

/// Exact minimum by enumeration of the whole state space in lexicographic
/// occupation order.
pub fn exhaustive<S: Scalar>(
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
    ensemble: Ensemble,
    budget: &SearchBudget,
) -> Result<SearchResult<S>, OptimizerError> {
    let p = cm.dim();
    let particles = match ensemble {
        Ensemble::Canonical(f) => Some(
            ensemble
                .particles(p)
                .ok_or(OptimizerError::IncompatibleFilling(f, p))?,
        ),
        Ensemble::GrandCanonical => None,
    };
    let mut cap = initial_cap(params, particles);
    loop {
        let states = state_count(p, particles, cap)
            .ok_or(OptimizerError::StateSpaceTooLarge(u128::MAX, budget.exhaustive_limit))?;
        if states > budget.exhaustive_limit {
            return Err(OptimizerError::StateSpaceTooLarge(
                states,
                budget.exhaustive_limit,
            ));
        }
        let result = enumerate_all(cm, params, particles, cap)?;
        if particles.is_none() && !params.is_hardcore() && result.best.max_occ() == cap {
            cap *= 2; // cap saturated: never clip silently
            continue;
        }
        return Ok(result);
    }
}

fn enumerate_all<S: Scalar>(
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
    particles: Option<u64>,
    cap: u32,
) -> Result<SearchResult<S>, OptimizerError> {
    struct Rec<'a, S> {
        cm: &'a CouplingMatrix<S>,
        params: &'a ModelParams<S>,
        cap: u32,
        p: usize,
        occ: Occupation,
        /// pot[k] = Σ_{j<current, n_j>0} Ṽ_{j,k} n_j
        pot: Vec<S>,
        tracker: MinTracker<S>,
    }

    impl<S: Scalar> Rec<'_, S> {
        fn go(&mut self, k: usize, n_rem: Option<u64>, e_prefix: S) {
            if k == self.p {
                if n_rem.unwrap_or(0) == 0 {
                    self.tracker.offer(e_prefix, &self.occ);
                }
                return;
            }
            let remaining_sites = (self.p - k - 1) as u64;
            let (lo, hi) = match n_rem {
                Some(r) => {
                    let lo = r.saturating_sub(remaining_sites * self.cap as u64);
                    (lo as u32, r.min(self.cap as u64) as u32)
                }
                None => (0, self.cap),
            };
            let half = S::from_f64_lit(0.5);
            for nk in lo..=hi {
                let nf = S::from_f64_lit(nk as f64);
                let de = if nk == 0 {
                    S::zero()
                } else {
                    -self.params.mu * nf
                        + self.params.v * nf * self.pot[k]
                        + half * self.params.v * self.cm.get(k, k) * nf * nf
                        + half
                            * match self.params.onsite {
                                crate::energy::OnSite::Hardcore => S::zero(),
                                crate::energy::OnSite::Finite(u) => u,
                            }
                            * nf
                            * (nf - S::one())
                };
                self.occ.n[k] = nk;
                if nk > 0 {
                    for m in k + 1..self.p {
                        self.pot[m] += self.cm.get(k, m) * nf;
                    }
                }
                self.go(k + 1, n_rem.map(|r| r - nk as u64), e_prefix + de);
                if nk > 0 {
                    for m in k + 1..self.p {
                        self.pot[m] -= self.cm.get(k, m) * nf;
                    }
                }
            }
            self.occ.n[k] = 0;
        }
    }

    let p = cm.dim();
    let mut rec = Rec {
        cm,
        params,
        cap,
        p,
        occ: Occupation::empty(p),
        pot: vec![S::zero(); p],
        tracker: MinTracker::new(),
    };
    rec.go(0, particles, S::zero());
    let (best, minima_histogram) = rec.tracker.finish();
    let eps = energy_per_site(&best, cm, params)?;
    Ok(SearchResult {
        best,
        eps,
        exact: true,
        descents_run: 0,
        minima_histogram,
    })
}

/// One proposal of the descent/scramble move set.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Op {
    Move(usize, usize),
    Insert(usize),
    Remove(usize),
}

fn apply_op(occ: &mut Occupation, op: Op) {
    match op {
        Op::Move(i, j) => {
            occ.n[i] -= 1;
            occ.n[j] += 1;
        }
        Op::Insert(i) => occ.n[i] += 1,
        Op::Remove(i) => occ.n[i] -= 1,
    }
}

/// Summed magnitude of every Hamiltonian term. All Ṽ entries are positive,
/// so the pair part is cancellation-free: this is the scale rounding error
/// in an energy difference is proportional to.
fn gross_energy<S: Scalar>(occ: &Occupation, pot: &[S], params: &ModelParams<S>) -> S {
    let half = S::from_f64_lit(0.5);
    let mut n_total = S::zero();
    let mut pair = S::zero();
    let mut onsite = S::zero();
    for (i, &ni) in occ.n.iter().enumerate() {
        if ni > 0 {
            let nif = S::from_f64_lit(ni as f64);
            n_total += nif;
            pair += nif * pot[i];
            onsite += nif * (nif - S::one());
        }
    }
    params.mu.abs() * n_total + half * params.v.abs() * pair + half * params.u_eff().abs() * onsite
}

/// Repeatedly applies the legal operation with the most negative ΔE (moves
/// always; insert/remove only in grand-canonical mode) until none improves
/// by more than `STEP_NOISE_TOL` of the gross energy. Ties resolve to the
/// earliest proposal: moves in ascending (i, j), then inserts, then removes.
pub fn steepest_descent<S: Scalar>(
    start: Occupation,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
    canonical: bool,
    cap: u32,
) -> Result<(Occupation, u64), OptimizerError> {
    let p = cm.dim();
    let mut occ = start;
    let mut steps = 0u64;
    loop {
        let pot = site_potentials(&occ, cm);
        let theta = S::from_f64_lit(STEP_NOISE_TOL) * gross_energy(&occ, &pot, params);
        let mut best: Option<(S, Op)> = None;
        let consider = |de: S, op: Op, best: &mut Option<(S, Op)>| {
            if de < -theta && best.as_ref().map_or(true, |&(b, _)| de < b) {
                *best = Some((de, op));
            }
        };
        for i in 0..p {
            if occ.n[i] == 0 {
                continue;
            }
            for j in 0..p {
                if i == j || occ.n[j] >= cap {
                    continue;
                }
                let de = delta_move_with(&occ, i, j, pot[i], pot[j], cm, params)
                    .expect("move is legal by construction");
                consider(de, Op::Move(i, j), &mut best);
            }
        }
        if !canonical {
            for i in 0..p {
                if occ.n[i] < cap {
                    let de = delta_insert_with(&occ, i, pot[i], cm, params)
                        .expect("insert is legal by construction");
                    consider(de, Op::Insert(i), &mut best);
                }
            }
            for i in 0..p {
                if occ.n[i] > 0 {
                    let de = delta_remove_with(&occ, i, pot[i], cm, params)
                        .expect("remove is legal by construction");
                    consider(de, Op::Remove(i), &mut best);
                }
            }
        }
        match best {
            Some((_, op)) => {
                apply_op(&mut occ, op);
                steps += 1;
            }
            None => return Ok((occ, steps)),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic per-cell RNG stream: the user seed combined with the cell
/// identity, so results do not depend on which worker handles which cell.
fn cell_rng<S: Scalar>(cm: &CouplingMatrix<S>, seed: u64) -> ChaCha8Rng {
    let tag = format!("{}|{}", cm.cell.lattice, cm.cell.zcell.id());
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(tag.as_bytes()))
}

fn scramble(
    occ: &mut Occupation,
    rng: &mut ChaCha8Rng,
    moves: usize,
    canonical: bool,
    cap: u32,
) {
    let p = occ.len();
    for _ in 0..moves {
        let kind = if canonical { 0 } else { rng.gen_range(0..3) };
        match kind {
            0 => {
                let sources: Vec<usize> = (0..p).filter(|&i| occ.n[i] > 0).collect();
                if sources.is_empty() {
                    continue;
                }
                let i = sources[rng.gen_range(0..sources.len())];
                let targets: Vec<usize> =
                    (0..p).filter(|&j| j != i && occ.n[j] < cap).collect();
                if targets.is_empty() {
                    continue;
                }
                let j = targets[rng.gen_range(0..targets.len())];
                apply_op(occ, Op::Move(i, j));
            }
            1 => {
                let slots: Vec<usize> = (0..p).filter(|&i| occ.n[i] < cap).collect();
                if slots.is_empty() {
                    continue;
                }
                apply_op(occ, Op::Insert(slots[rng.gen_range(0..slots.len())]));
            }
            _ => {
                let sources: Vec<usize> = (0..p).filter(|&i| occ.n[i] > 0).collect();
                if sources.is_empty() {
                    continue;
                }
                apply_op(occ, Op::Remove(sources[rng.gen_range(0..sources.len())]));
            }
        }
    }
}

/// Canonical starting configuration: particles dealt round-robin.
fn initial_occupation(p: usize, particles: Option<u64>) -> Occupation {
    let mut occ = Occupation::empty(p);
    if let Some(n) = particles {
        for k in 0..n {
            occ.n[(k % p as u64) as usize] += 1;
        }
    }
    occ
}

/// Global search: steepest descents from randomly scrambled copies of the
/// incumbent minimum, stopping once `restarts_without_improvement`
/// consecutive descents fail to improve it.
pub fn basin_hopping<S: Scalar>(
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
    ensemble: Ensemble,
    budget: &SearchBudget,
) -> Result<SearchResult<S>, OptimizerError> {
    let p = cm.dim();
    let particles = match ensemble {
        Ensemble::Canonical(f) => Some(
            ensemble
                .particles(p)
                .ok_or(OptimizerError::IncompatibleFilling(f, p))?,
        ),
        Ensemble::GrandCanonical => None,
    };
    let canonical = particles.is_some();
    let mut cap = initial_cap(params, particles);
    let mut rng = cell_rng(cm, budget.rng_seed);
    let scramble_moves = budget.scramble_moves.unwrap_or(p);
    let tol = S::from_f64_lit(DEGENERACY_TOL);
    loop {
        let (mut best, _) =
            steepest_descent(initial_occupation(p, particles), cm, params, canonical, cap)?;
        let mut best_e = cell_energy(&best, cm, params)?;
        let mut minima: BTreeSet<Occupation> = BTreeSet::new();
        minima.insert(best.clone());
        let mut descents = 1u64;
        let mut stale = 0u32;
        while stale < budget.restarts_without_improvement {
            let mut trial = best.clone();
            scramble(&mut trial, &mut rng, scramble_moves, canonical, cap);
            let (local, _) = steepest_descent(trial, cm, params, canonical, cap)?;
            let e = cell_energy(&local, cm, params)?;
            descents += 1;
            let window = tol * best_e.abs();
            if e < best_e - window {
                best = local;
                best_e = e;
                minima.clear();
                minima.insert(best.clone());
                stale = 0;
            } else {
                if (e - best_e).abs() <= window {
                    minima.insert(local);
                }
                stale += 1;
            }
        }
        if !canonical && !params.is_hardcore() && best.max_occ() == cap {
            cap *= 2;
            continue;
        }
        let p_f = S::from_f64_lit(p as f64);
        let mut energies: Vec<S> = minima
            .iter()
            .map(|occ| cell_energy(occ, cm, params).map(|e| e / p_f))
            .collect::<Result<_, _>>()?;
        energies.sort_by(|a, b| a.partial_cmp(b).expect("finite energies"));
        let mut histogram: Vec<(S, u64)> = Vec::new();
        for &e in &energies {
            match histogram.last_mut() {
                Some((anchor, count)) if (e - *anchor).abs() <= tol * anchor.abs() => *count += 1,
                _ => histogram.push((e, 1)),
            }
        }
        let eps = energy_per_site(&best, cm, params)?;
        return Ok(SearchResult {
            best,
            eps,
            exact: false,
            descents_run: descents,
            minima_histogram: histogram,
        });
    }
}

/// Exhaustive when the state space fits the budget, basin hopping otherwise.
pub fn ground_state<S: Scalar>(
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
    ensemble: Ensemble,
    budget: &SearchBudget,
) -> Result<SearchResult<S>, OptimizerError> {
    let p = cm.dim();
    let particles = match ensemble {
        Ensemble::Canonical(f) => Some(
            ensemble
                .particles(p)
                .ok_or(OptimizerError::IncompatibleFilling(f, p))?,
        ),
        Ensemble::GrandCanonical => None,
    };
    let cap = initial_cap(params, particles);
    match state_count(p, particles, cap) {
        Some(states) if states <= budget.exhaustive_limit => {
            match exhaustive(cm, params, ensemble, budget) {
                // a grand-canonical softcore cap raise can outgrow the limit
                Err(OptimizerError::StateSpaceTooLarge(..)) => {
                    basin_hopping(cm, params, ensemble, budget)
                }
                other => other,
            }
        }
        _ => basin_hopping(cm, params, ensemble, budget),
    }
}

/// Runs the per-cell search on every cell and returns the global minimizer.
/// Cells incompatible with a canonical filling are skipped. Energy ties
/// resolve toward the smaller cell index, then the lexicographically smaller
/// canonical pair.
pub fn best_over_cells<S: Scalar>(
    cms: &[CouplingMatrix<S>],
    params: &ModelParams<S>,
    ensemble: Ensemble,
    budget: &SearchBudget,
) -> Result<(usize, SearchResult<S>), OptimizerError> {
    let searched: Vec<(usize, SearchResult<S>)> = cms
        .par_iter()
        .enumerate()
        .filter(|(_, cm)| match ensemble {
            Ensemble::Canonical(_) => ensemble.particles(cm.dim()).is_some(),
            Ensemble::GrandCanonical => true,
        })
        .map(|(idx, cm)| ground_state(cm, params, ensemble, budget).map(|r| (idx, r)))
        .collect::<Result<_, _>>()?;
    let tol = S::from_f64_lit(DEGENERACY_TOL);
    searched
        .into_iter()
        .min_by(|(ia, ra), (ib, rb)| {
            let (ea, eb) = (ra.eps.eps_total, rb.eps.eps_total);
            if (ea - eb).abs() <= tol * ea.abs().max(eb.abs()) {
                let ka = (cms[*ia].cell.zcell.index, cms[*ia].cell.zcell.pair);
                let kb = (cms[*ib].cell.zcell.index, cms[*ib].cell.zcell.pair);
                ka.cmp(&kb)
            } else {
                ea.partial_cmp(&eb).expect("finite energies")
            }
        })
        .ok_or(OptimizerError::NoCompatibleCells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{coupling_matrix, ResumParams};
    use crate::geometry::{builtin_lattice, embed};
    use crate::zcell::{representatives, ZVector, ZVectorPair};

    fn tri_matrix(z1: (i64, i64), z2: (i64, i64), alpha: f64) -> CouplingMatrix<f64> {
        let lat = builtin_lattice("triangular").unwrap();
        let zc = representatives(ZVectorPair::new(
            ZVector::new(z1.0, z1.1),
            ZVector::new(z2.0, z2.1),
        ))
        .unwrap();
        let params = ResumParams::new(alpha).with_schedule(&[16, 32, 64, 128]);
        coupling_matrix(&embed(&lat, &zc), &params).unwrap()
    }

    #[test]
    fn state_counts() {
        assert_eq!(state_count(12, Some(6), 1), Some(924)); // C(12,6)
        assert_eq!(state_count(4, None, 1), Some(16));
        assert_eq!(state_count(3, Some(2), 2), Some(6)); // compositions
        assert_eq!(state_count(9, Some(9), 9), Some(24310)); // C(17,8)
    }

    #[test]
    fn two_site_half_filling_picks_the_lower_state() {
        let cm = tri_matrix((2, 0), (0, 1), 6.0);
        let params = ModelParams::hardcore(0.0, 1.0, 6.0);
        let r = exhaustive(
            &cm,
            &params,
            Ensemble::Canonical(Ratio::new(1, 2)),
            &SearchBudget::default(),
        )
        .unwrap();
        assert!(r.exact);
        assert_eq!(r.best.total(), 1);
        // both single-particle states are symmetry-equivalent
        assert_eq!(r.ground_degeneracy(), 2);
    }

    #[test]
    fn stripe_beats_double_occupancy_at_small_v() {
        // 2×2 cell, f = 1/2 softcore: at small V/U two singly occupied sites
        // (a stripe) win; at large V/U both bosons pile onto one site
        let cm = tri_matrix((2, 0), (0, 2), 3.0);
        let f = Ensemble::Canonical(Ratio::new(1, 2));
        let small_v = ModelParams::softcore(0.0, 1.0, 0.2, 3.0);
        let r = exhaustive(&cm, &small_v, f, &SearchBudget::default()).unwrap();
        assert_eq!(r.best.total(), 2);
        assert_eq!(r.best.max_occ(), 1);
        let large_v = ModelParams::softcore(0.0, 1.0, 2.0, 3.0);
        let r = exhaustive(&cm, &large_v, f, &SearchBudget::default()).unwrap();
        assert_eq!(r.best.max_occ(), 2);
    }

    #[test]
    fn exhaustive_respects_the_state_limit() {
        let cm = tri_matrix((4, 0), (0, 4), 6.0);
        let budget = SearchBudget {
            exhaustive_limit: 100,
            ..Default::default()
        };
        let r = exhaustive(
            &cm,
            &ModelParams::hardcore(0.5, 1.0, 6.0),
            Ensemble::GrandCanonical,
            &budget,
        );
        assert!(matches!(r, Err(OptimizerError::StateSpaceTooLarge(65536, 100))));
    }

    #[test]
    fn incompatible_filling_is_rejected() {
        let cm = tri_matrix((2, 0), (0, 1), 6.0); // p = 2
        let r = exhaustive(
            &cm,
            &ModelParams::hardcore(0.0, 1.0, 6.0),
            Ensemble::Canonical(Ratio::new(1, 3)),
            &SearchBudget::default(),
        );
        assert!(matches!(r, Err(OptimizerError::IncompatibleFilling(..))));
    }

    #[test]
    fn descent_from_a_unique_minimum_stays_put() {
        // μ far above saturation: the filled configuration is the unique
        // ground state (degenerate minima would allow spurious ~1e-16 moves)
        let cm = tri_matrix((2, 0), (0, 2), 6.0);
        let params = ModelParams::hardcore(20.0, 1.0, 6.0);
        let r = exhaustive(&cm, &params, Ensemble::GrandCanonical, &SearchBudget::default())
            .unwrap();
        assert_eq!(r.best.n, vec![1; 4]);
        let (occ, steps) = steepest_descent(r.best.clone(), &cm, &params, false, 1).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(occ, r.best);
    }

    #[test]
    fn descent_separates_adjacent_particles() {
        let cm = tri_matrix((4, 0), (0, 4), 6.0);
        let params = ModelParams::hardcore(0.0, 1.0, 6.0);
        let mut start = Occupation::empty(16);
        start.n[0] = 1;
        start.n[1] = 1; // adjacent reps
        let before = cell_energy(&start, &cm, &params).unwrap();
        let (occ, steps) = steepest_descent(start, &cm, &params, true, 1).unwrap();
        let after = cell_energy(&occ, &cm, &params).unwrap();
        assert!(steps > 0);
        assert!(after < before);
        // exhaustive reference over all 2-particle placements
        let r = exhaustive(
            &cm,
            &params,
            Ensemble::Canonical(Ratio::new(1, 8)),
            &SearchBudget::default(),
        )
        .unwrap();
        assert!((after - r.eps.eps_total * 16.0).abs() <= 1e-9 * after.abs());
    }

    #[test]
    fn basin_hopping_matches_exhaustive_and_is_reproducible() {
        let cm = tri_matrix((3, 1), (0, 2), 6.0); // p = 6
        let params = ModelParams::hardcore(2.0, 1.0, 6.0);
        let budget = SearchBudget {
            rng_seed: 42,
            ..Default::default()
        };
        let ex = exhaustive(&cm, &params, Ensemble::GrandCanonical, &budget).unwrap();
        let bh1 = basin_hopping(&cm, &params, Ensemble::GrandCanonical, &budget).unwrap();
        let bh2 = basin_hopping(&cm, &params, Ensemble::GrandCanonical, &budget).unwrap();
        assert_eq!(bh1, bh2);
        assert!(
            (bh1.eps.eps_total - ex.eps.eps_total).abs() <= 1e-10 * ex.eps.eps_total.abs()
        );
        assert!(!bh1.exact);
        assert!(bh1.descents_run >= 11);
    }

    #[test]
    fn grand_canonical_softcore_cap_is_raised_not_clipped() {
        // μ large and V weak: the optimum piles more than 4 bosons per site,
        // so the initial grand-canonical cap of 4 must be raised, and the
        // raised cap overflows the exhaustive limit into basin hopping
        let cm = tri_matrix((3, 0), (0, 3), 10.0);
        let params = ModelParams::softcore(6.0, 1.0, 0.05, 10.0);
        let r = ground_state(
            &cm,
            &params,
            Ensemble::GrandCanonical,
            &SearchBudget {
                exhaustive_limit: 2_000_000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.best.max_occ() > 4, "cap saturated at {}", r.best.max_occ());
    }

    #[test]
    fn best_over_cells_prefers_smaller_equivalent_cells() {
        let small = tri_matrix((1, 0), (0, 2), 6.0);
        let doubled = tri_matrix((2, 0), (0, 2), 6.0);
        let params = ModelParams::hardcore(0.0, 1.0, 6.0);
        let (idx, r) = best_over_cells(
            &[doubled.clone(), small.clone()],
            &params,
            Ensemble::Canonical(Ratio::new(1, 2)),
            &SearchBudget::default(),
        )
        .unwrap();
        // same stripe energy on both cells; the index-2 cell wins the tie
        assert_eq!(idx, 1);
        assert_eq!(r.best.total(), 1);
    }

    #[test]
    fn odd_cells_are_skipped_at_half_filling() {
        let odd = tri_matrix((3, 0), (0, 1), 6.0);
        let even = tri_matrix((2, 0), (0, 1), 6.0);
        let params = ModelParams::hardcore(0.0, 1.0, 6.0);
        let (idx, _) = best_over_cells(
            &[odd, even],
            &params,
            Ensemble::Canonical(Ratio::new(1, 2)),
            &SearchBudget::default(),
        )
        .unwrap();
        assert_eq!(idx, 1);
        let only_odd = tri_matrix((3, 0), (0, 1), 6.0);
        assert_eq!(
            best_over_cells(
                &[only_odd],
                &params,
                Ensemble::Canonical(Ratio::new(1, 2)),
                &SearchBudget::default()
            )
            .unwrap_err(),
            OptimizerError::NoCompatibleCells
        );
    }
}
