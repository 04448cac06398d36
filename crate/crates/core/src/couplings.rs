//! Resummed couplings Ṽ^{K,α} and their K → ∞ extrapolation.
//!
//! A coupling between two cell sites is the lattice sum over all periodic
//! images of the supercell, cut off at K rings and extrapolated to K = ∞
//! along the K^{2−α} law. Floating-point discipline: every sum adds its
//! terms in descending-distance order (smallest magnitudes first) under
//! compensated accumulation, so results are deterministic and do not depend
//! on thread scheduling.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write as IoWrite};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{EmbeddedCell, Vec2};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("alpha = {0} too small: resummation requires alpha > 2.5 (weak long-range regime)")]
    AlphaTooSmall(f64),
    #[error("K schedule must be nonempty and strictly increasing")]
    BadSchedule,
    #[error("extrapolation needs at least 2 points with at least 2 fit points")]
    BadFitPoints,
    #[error("degenerate geometry: a periodic image displacement is shorter than {DEGENERATE_TOL}")]
    DegenerateGeometry,
    #[error("extrapolation abscissae coincide; fit is singular")]
    SingularFit,
    #[error("coupling cache: {0}")]
    Cache(String),
}

/// Displacements shorter than this are degenerate (coincident sites).
pub const DEGENERATE_TOL: f64 = 1e-9;

/// Resummation controls: decay exponent, cutoff schedule, fit window,
/// and the relative residual above which a matrix counts as unconverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumParams {
    pub alpha: f64,
    pub k_schedule: Vec<u32>,
    pub fit_points: usize,
    pub tol_rel: f64,
}

impl ResumParams {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            k_schedule: vec![128, 256, 512, 1024],
            fit_points: 3,
            tol_rel: 1e-10,
        }
    }

    pub fn with_schedule(mut self, schedule: &[u32]) -> Self {
        self.k_schedule = schedule.to_vec();
        self
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        if self.alpha <= 2.5 {
            return Err(CouplingError::AlphaTooSmall(self.alpha));
        }
        if self.k_schedule.is_empty() || self.k_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CouplingError::BadSchedule);
        }
        if self.fit_points < 2 || self.k_schedule.len() < self.fit_points {
            return Err(CouplingError::BadFitPoints);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Default)]
struct Kahan<S> {
    sum: S,
    comp: S,
}

impl<S: Scalar> Kahan<S> {
    // Neumaier variant: also compensates when a term exceeds the running sum
    fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> S {
        self.sum + self.comp
    }
}

/// |d|^{−α} evaluated from |d|², with exact-exponent fast paths.
#[derive(Clone, Copy)]
enum Kernel {
    EvenInv(i32),
    OddInv(i32),
    Pow(f64),
}

fn kernel_for(alpha: f64) -> Kernel {
    if alpha.fract() == 0.0 && alpha.abs() <= 300.0 {
        let ai = alpha as i32;
        if ai % 2 == 0 {
            Kernel::EvenInv(-ai / 2)
        } else {
            Kernel::OddInv(-ai)
        }
    } else {
        Kernel::Pow(-alpha / 2.0)
    }
}

impl Kernel {
    fn eval<S: Scalar>(self, r2: S) -> S {
        match self {
            Kernel::EvenInv(e) => r2.powi(e),
            Kernel::OddInv(e) => r2.sqrt().powi(e),
            Kernel::Pow(e) => r2.powf(S::from_f64_lit(e)),
        }
    }
}

/// Core summation: Σ |Δ + k T₁ − l T₂|^{−α} over (k,l) ∈ [−K,K]², evaluated
/// at every cutoff of `schedule` (ascending) in one sorted pass. The value at
/// each cutoff is bit-identical to a standalone summation at that cutoff,
/// because the descending-distance subsequence of the full term list is the
/// descending-distance ordering of the sub-window.
fn resum_values<S: Scalar>(
    delta: Vec2<S>,
    t1: Vec2<S>,
    t2: Vec2<S>,
    self_pair: bool,
    alpha: f64,
    schedule: &[u32],
) -> Result<Vec<S>, CouplingError> {
    debug_assert!(schedule.windows(2).all(|w| w[0] < w[1]));
    let kmax = *schedule.last().ok_or(CouplingError::BadSchedule)? as i64;
    let k_images: Vec<Vec2<S>> = (-kmax..=kmax)
        .map(|k| t1 * S::from_f64_lit(k as f64))
        .collect();
    let l_images: Vec<Vec2<S>> = (-kmax..=kmax)
        .map(|l| t2 * S::from_f64_lit(l as f64))
        .collect();
    let tol2 = S::from_f64_lit(DEGENERATE_TOL * DEGENERATE_TOL);
    let side = (2 * kmax + 1) as usize;
    let mut terms: Vec<(S, u32)> = Vec::with_capacity(side * side);
    for (ik, kt) in k_images.iter().enumerate() {
        let k = ik as i64 - kmax;
        let bx = delta.x + kt.x;
        let by = delta.y + kt.y;
        for (il, lt) in l_images.iter().enumerate() {
            let l = il as i64 - kmax;
            let dx = bx - lt.x;
            let dy = by - lt.y;
            let r2 = dx * dx + dy * dy;
            if r2 < tol2 {
                if self_pair && k == 0 && l == 0 {
                    continue; // the self-term of Ṽ_{i,i}
                }
                return Err(CouplingError::DegenerateGeometry);
            }
            terms.push((r2, k.abs().max(l.abs()) as u32));
        }
    }
    terms.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).expect("finite distances"));
    let kernel = kernel_for(alpha);
    let mut accs = vec![Kahan::<S>::default(); schedule.len()];
    for &(r2, ring) in &terms {
        let v = kernel.eval(r2);
        let first = schedule.partition_point(|&k| k < ring);
        for acc in &mut accs[first..] {
            acc.add(v);
        }
    }
    Ok(accs.into_iter().map(Kahan::value).collect())
}

/// Ṽ^{K,α}_{i,j}: the resummed coupling at finite cutoff K.
pub fn resum<S: Scalar>(
    cell: &EmbeddedCell<S>,
    i: usize,
    j: usize,
    alpha: f64,
    k: u32,
) -> Result<S, CouplingError> {
    let delta = cell.sites[i] - cell.sites[j];
    Ok(resum_values(delta, cell.t1, cell.t2, i == j, alpha, &[k])?[0])
}

/// Intercept and worst fitted-point deviation of the K^{2−α} fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated<S> {
    pub value: S,
    pub residual: S,
}

/// Least-squares line of value vs. K^{2−α} over the `fit_points` largest K;
/// the intercept estimates Ṽ^{∞,α}.
pub fn extrapolate<S: Scalar>(
    points: &[(u32, S)],
    alpha: f64,
    fit_points: usize,
) -> Result<Extrapolated<S>, CouplingError> {
    if points.len() < 2 || fit_points < 2 {
        return Err(CouplingError::BadFitPoints);
    }
    let mut pts = points.to_vec();
    pts.sort_by_key(|&(k, _)| k);
    let tail = &pts[pts.len().saturating_sub(fit_points)..];
    let expo = 2.0 - alpha;
    let xs: Vec<S> = tail
        .iter()
        .map(|&(k, _)| S::from_f64_lit((k as f64).powf(expo)))
        .collect();
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(CouplingError::SingularFit);
    }
    let n = S::from_f64_lit(tail.len() as f64);
    let xbar = xs.iter().copied().sum::<S>() / n;
    let ybar = tail.iter().map(|&(_, y)| y).sum::<S>() / n;
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for (&x, &(_, y)) in xs.iter().zip(tail.iter()) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
    }
    let slope = sxy / sxx;
    let value = ybar - slope * xbar;
    let mut residual = S::zero();
    for (&x, &(_, y)) in xs.iter().zip(tail.iter()) {
        residual = residual.max((y - (value + slope * x)).abs());
    }
    Ok(Extrapolated { value, residual })
}

/// Extrapolated coupling matrix of one embedded cell at one α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix<S> {
    pub cell: EmbeddedCell<S>,
    pub alpha: f64,
    /// Row-major p×p, exactly symmetric.
    pub v_inf: Vec<S>,
    pub fit_residual: Vec<S>,
    /// Largest relative fit residual across entries.
    pub max_residual_rel: f64,
    /// False iff `max_residual_rel` exceeded the configured tolerance.
    pub converged: bool,
}

impl<S: Scalar> CouplingMatrix<S> {
    pub fn dim(&self) -> usize {
        self.cell.num_sites()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.v_inf[i * self.dim() + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        let p = self.dim();
        &self.v_inf[i * p..(i + 1) * p]
    }

    /// Ṽ_{i,i} + Σ_{j≠i} Ṽ_{i,j}; equals μ̄^α for every site of any cell.
    pub fn row_sum(&self, i: usize) -> S {
        // ascending magnitudes are not known here; plain compensated order-of-
        // storage accumulation is enough at p ≤ a few hundred
        let mut acc = Kahan::default();
        for &v in self.row(i) {
            acc.add(v);
        }
        acc.value()
    }
}

/// Congruence class of an unordered site pair: couplings depend on the
/// displacement only modulo the cell's image lattice and up to inversion, so
/// one resummation serves every pair in the class.
fn pair_class<S: Scalar>(cell: &EmbeddedCell<S>, i: usize, j: usize) -> (i64, i64, usize, usize) {
    let (zi, ki) = cell.site_origin(i);
    let (zj, kj) = cell.site_origin(j);
    let fwd = cell.zcell.pair.coset_key(zi - zj);
    let bwd = cell.zcell.pair.coset_key(zj - zi);
    (fwd.0, fwd.1, ki, kj).min((bwd.0, bwd.1, kj, ki))
}

/// Full symmetric matrix of extrapolated couplings, one resummation per
/// displacement class, classes evaluated in parallel.
pub fn coupling_matrix<S: Scalar>(
    cell: &EmbeddedCell<S>,
    params: &ResumParams,
) -> Result<CouplingMatrix<S>, CouplingError> {
    params.validate()?;
    let p = cell.num_sites();
    let mut classes: BTreeMap<(i64, i64, usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..p {
        for j in i..p {
            classes.entry(pair_class(cell, i, j)).or_default().push((i, j));
        }
    }
    let class_list: Vec<&Vec<(usize, usize)>> = classes.values().collect();
    let computed = class_list
        .par_iter()
        .map(|members| {
            let &(i, j) = members.first().expect("class nonempty");
            let delta = cell.sites[i] - cell.sites[j];
            let sums = resum_values(delta, cell.t1, cell.t2, i == j, params.alpha, &params.k_schedule)?;
            let pts: Vec<(u32, S)> = params.k_schedule.iter().copied().zip(sums).collect();
            extrapolate(&pts, params.alpha, params.fit_points)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut v_inf = vec![S::zero(); p * p];
    let mut fit_residual = vec![S::zero(); p * p];
    let mut max_rel = 0.0f64;
    for (members, ex) in class_list.iter().zip(&computed) {
        let rel = (ex.residual / ex.value.abs().max(S::min_positive_value())).to_f64_lossy();
        max_rel = max_rel.max(rel);
        for &(i, j) in members.iter() {
            v_inf[i * p + j] = ex.value;
            v_inf[j * p + i] = ex.value;
            fit_residual[i * p + j] = ex.residual;
            fit_residual[j * p + i] = ex.residual;
        }
    }
    Ok(CouplingMatrix {
        cell: cell.clone(),
        alpha: params.alpha,
        v_inf,
        fit_residual,
        max_residual_rel: max_rel,
        converged: max_rel <= params.tol_rel,
    })
}

/// Disk cache of coupling matrices, one JSON record per line, keyed by
/// (lattice, canonical pair, alpha, K schedule).
pub struct CouplingStore<S> {
    path: PathBuf,
    entries: BTreeMap<String, CouplingMatrix<S>>,
}

pub fn cache_key(lattice: &str, cell_id: &str, alpha: f64, schedule: &[u32]) -> String {
    let ks: Vec<String> = schedule.iter().map(|k| k.to_string()).collect();
    // alpha keyed by exact bits so 3.0 and 3.0000000001 never collide
    format!("{lattice}|{cell_id}|{:016x}|{}", alpha.to_bits(), ks.join("-"))
}

#[derive(Serialize, Deserialize)]
struct CacheRecord<S> {
    key: String,
    params: ResumParams,
    matrix: CouplingMatrix<S>,
}

impl<S: Scalar + Serialize + DeserializeOwned> CouplingStore<S> {
    /// Open (or create) a cache file and load all existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CouplingError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| CouplingError::Cache(e.to_string()))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| CouplingError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord<S> = serde_json::from_str(&line)
                    .map_err(|e| CouplingError::Cache(format!("corrupt record: {e}")))?;
                entries.insert(rec.key, rec.matrix);
            }
        }
        Ok(Self { path, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, cell: &EmbeddedCell<S>, params: &ResumParams) -> Option<&CouplingMatrix<S>> {
        self.entries.get(&cache_key(
            &cell.lattice,
            &cell.zcell.id(),
            params.alpha,
            &params.k_schedule,
        ))
    }

    /// Cached matrix, computing and persisting on miss.
    pub fn get_or_compute(
        &mut self,
        cell: &EmbeddedCell<S>,
        params: &ResumParams,
    ) -> Result<CouplingMatrix<S>, CouplingError> {
        let key = cache_key(&cell.lattice, &cell.zcell.id(), params.alpha, &params.k_schedule);
        if let Some(m) = self.entries.get(&key) {
            return Ok(m.clone());
        }
        let matrix = coupling_matrix(cell, params)?;
        self.put(key, params, matrix.clone())?;
        Ok(matrix)
    }

    fn put(&mut self, key: String, params: &ResumParams, matrix: CouplingMatrix<S>) -> Result<(), CouplingError> {
        let rec = CacheRecord {
            key: key.clone(),
            params: params.clone(),
            matrix: matrix.clone(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| CouplingError::Cache(e.to_string()))?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CouplingError::Cache(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| CouplingError::Cache(e.to_string()))?;
        self.entries.insert(key, matrix);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_lattice, embed};
    use crate::zcell::{representatives, ZVector, ZVectorPair};
    use approx::assert_abs_diff_eq;

    fn tri_cell(z1: (i64, i64), z2: (i64, i64)) -> EmbeddedCell<f64> {
        let lat = builtin_lattice("triangular").unwrap();
        let cell = representatives(ZVectorPair::new(
            ZVector::new(z1.0, z1.1),
            ZVector::new(z2.0, z2.1),
        ))
        .unwrap();
        embed(&lat, &cell)
    }

    #[test]
    fn k_zero_off_diagonal_is_the_bare_term() {
        let cell = tri_cell((2, 0), (0, 2));
        let r2 = (cell.sites[1] - cell.sites[2]).norm2();
        let v = resum(&cell, 1, 2, 6.0, 0).unwrap();
        // the even-α kernel works on |Δ|², so this is an exact identity
        assert_eq!(v, r2.powi(-3));
    }

    #[test]
    fn large_alpha_self_coupling_approaches_coordination_number() {
        let cell = tri_cell((1, 0), (0, 1));
        let v = resum(&cell, 0, 0, 30.0, 2).unwrap();
        assert_abs_diff_eq!(v, 6.0, epsilon = 1e-4);
    }

    #[test]
    fn schedule_pass_matches_standalone_sums_bitwise() {
        let cell = tri_cell((2, 1), (0, 3));
        for alpha in [3.0, 6.0, 7.5] {
            let schedule = [3, 7, 20];
            let delta = cell.sites[1] - cell.sites[4];
            let multi =
                resum_values(delta, cell.t1, cell.t2, false, alpha, &schedule).unwrap();
            for (idx, &k) in schedule.iter().enumerate() {
                assert_eq!(multi[idx], resum(&cell, 1, 4, alpha, k).unwrap());
            }
        }
    }

    #[test]
    fn resum_is_nondecreasing_in_k() {
        let cell = tri_cell((1, 0), (0, 1));
        let mut prev = 0.0;
        for k in [0, 1, 2, 4, 8, 16] {
            let v = resum(&cell, 0, 0, 3.0, k).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn constant_series_extrapolates_to_itself() {
        let c = 1.2345;
        let ex = extrapolate(&[(100u32, c), (200, c), (400, c)], 6.0, 3).unwrap();
        assert_eq!(ex.value, c);
        assert_eq!(ex.residual, 0.0);
    }

    #[test]
    fn coincident_abscissae_are_singular() {
        // alpha so large that K^{2−α} underflows to 0 for all K
        let r = extrapolate(&[(100u32, 1.0), (200, 2.0)], 700.0, 2);
        assert_eq!(r.unwrap_err(), CouplingError::SingularFit);
    }

    #[test]
    fn intercept_dominates_largest_cutoff_value() {
        let cell = tri_cell((1, 0), (0, 1));
        let schedule = [8u32, 16, 32, 64];
        let pts: Vec<(u32, f64)> = schedule
            .iter()
            .map(|&k| (k, resum(&cell, 0, 0, 4.0, k).unwrap()))
            .collect();
        let ex = extrapolate(&pts, 4.0, 3).unwrap();
        assert!(ex.value >= pts.last().unwrap().1);
    }

    #[test]
    fn small_alpha_is_rejected() {
        assert_eq!(
            ResumParams::new(2.4).validate().unwrap_err(),
            CouplingError::AlphaTooSmall(2.4)
        );
        assert!(ResumParams::new(2.6).validate().is_ok());
    }

    #[test]
    fn bad_schedules_are_rejected() {
        let mut p = ResumParams::new(6.0);
        p.k_schedule = vec![16, 16, 32];
        assert_eq!(p.validate().unwrap_err(), CouplingError::BadSchedule);
        p.k_schedule = vec![16, 32];
        p.fit_points = 3;
        assert_eq!(p.validate().unwrap_err(), CouplingError::BadFitPoints);
    }

    #[test]
    fn matrix_is_exactly_symmetric_and_converged() {
        let lat = builtin_lattice::<f64>("kagome_site").unwrap();
        let zc = representatives(ZVectorPair::new(ZVector::new(2, 0), ZVector::new(0, 1)))
            .unwrap();
        let cell = embed(&lat, &zc);
        let mut params = ResumParams::new(6.0).with_schedule(&[16, 32, 64, 128]);
        params.tol_rel = 1e-7; // short schedule: the fit residual sits well above 1e-10
        let cm = coupling_matrix(&cell, &params).unwrap();
        let p = cm.dim();
        assert_eq!(p, 6);
        for i in 0..p {
            for j in 0..p {
                assert_eq!(cm.get(i, j), cm.get(j, i));
                assert!(cm.get(i, j) > 0.0);
            }
        }
        assert!(cm.converged, "max rel residual {}", cm.max_residual_rel);
    }

    #[test]
    fn class_sharing_agrees_with_pairwise_resummation() {
        let lat = builtin_lattice::<f64>("kagome_site").unwrap();
        let zc = representatives(ZVectorPair::new(ZVector::new(2, 1), ZVector::new(0, 2)))
            .unwrap();
        let cell = embed(&lat, &zc);
        let params = ResumParams::new(6.0).with_schedule(&[32, 64, 128, 256]);
        let cm = coupling_matrix(&cell, &params).unwrap();
        for i in 0..cm.dim() {
            for j in i..cm.dim() {
                let pts: Vec<(u32, f64)> = params
                    .k_schedule
                    .iter()
                    .map(|&k| (k, resum(&cell, i, j, 6.0, k).unwrap()))
                    .collect();
                let ex = extrapolate(&pts, 6.0, 3).unwrap();
                // class members differ from their representative only by a
                // window shift, absorbed by the extrapolation
                assert_abs_diff_eq!(cm.get(i, j), ex.value, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn store_round_trips_and_hits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("couplings.jsonl");
        let cell = tri_cell((2, 0), (0, 1));
        let params = ResumParams::new(6.0).with_schedule(&[8, 16, 32]);
        let mut store: CouplingStore<f64> = CouplingStore::open(&path).unwrap();
        assert!(store.is_empty());
        let a = store.get_or_compute(&cell, &params).unwrap();
        assert_eq!(store.len(), 1);
        let reopened: CouplingStore<f64> = CouplingStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        let b = reopened.get(&cell, &params).unwrap();
        assert_eq!(a.v_inf, b.v_inf);
    }
}
