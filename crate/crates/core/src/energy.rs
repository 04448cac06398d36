//! Occupation configurations and the resummed Hamiltonian: energy per site,
//! O(p) energy differences of the elementary search moves, and the hardcore
//! particle-hole map.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::couplings::CouplingMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnergyError {
    #[error("occupation has {0} entries but the coupling matrix has {1} sites")]
    DimensionMismatch(usize, usize),
    #[error("hardcore model but site {0} holds {1} bosons")]
    HardcoreViolation(usize, u32),
    #[error("operation preconditions violated (treat as: not proposed)")]
    IllegalOperation,
    #[error("particle-hole transform is defined for hardcore occupations only")]
    SoftcoreUnsupported,
}

/// On-site repulsion: infinite (occupations restricted to {0,1}) or finite U.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OnSite<S> {
    Hardcore,
    Finite(S),
}

/// Hamiltonian parameters. Energies are carried in the units the caller
/// chooses for μ, U, V; sweeps use V-units (hardcore) or U-units (softcore).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<S> {
    pub mu: S,
    pub onsite: OnSite<S>,
    pub v: S,
    pub alpha: f64,
}

impl<S: Scalar> ModelParams<S> {
    pub fn hardcore(mu: S, v: S, alpha: f64) -> Self {
        Self {
            mu,
            onsite: OnSite::Hardcore,
            v,
            alpha,
        }
    }

    pub fn softcore(mu: S, u: S, v: S, alpha: f64) -> Self {
        Self {
            mu,
            onsite: OnSite::Finite(u),
            v,
            alpha,
        }
    }

    pub fn is_hardcore(&self) -> bool {
        matches!(self.onsite, OnSite::Hardcore)
    }

    /// U entering the n(n−1) term; 0 under hardcore where that term vanishes.
    pub(crate) fn u_eff(&self) -> S {
        match self.onsite {
            OnSite::Hardcore => S::zero(),
            OnSite::Finite(u) => u,
        }
    }
}

/// Per-site boson numbers on one embedded cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occupation {
    pub n: Vec<u32>,
}

impl Occupation {
    pub fn empty(p: usize) -> Self {
        Self { n: vec![0; p] }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.n.iter().map(|&x| x as u64).sum()
    }

    pub fn filling(&self) -> Ratio<i64> {
        Ratio::new(self.total() as i64, self.n.len() as i64)
    }

    pub fn max_occ(&self) -> u32 {
        self.n.iter().copied().max().unwrap_or(0)
    }
}

/// The four Hamiltonian terms per site, in order; total is their exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown<S> {
    pub eps_total: S,
    pub eps_mu: S,
    pub eps_pair: S,
    pub eps_self: S,
    pub eps_onsite: S,
}

fn check<S: Scalar>(
    occ: &Occupation,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<(), EnergyError> {
    if occ.len() != cm.dim() {
        return Err(EnergyError::DimensionMismatch(occ.len(), cm.dim()));
    }
    if params.is_hardcore() {
        if let Some((i, &n)) = occ.n.iter().enumerate().find(|(_, &n)| n > 1) {
            return Err(EnergyError::HardcoreViolation(i, n));
        }
    }
    Ok(())
}

/// Interaction potential at site i: S_i = Σ_j Ṽ_{i,j} n_j (j = i included).
#[inline]
pub fn site_potential<S: Scalar>(occ: &Occupation, cm: &CouplingMatrix<S>, i: usize) -> S {
    let mut s = S::zero();
    for (j, &vij) in cm.row(i).iter().enumerate() {
        let nj = occ.n[j];
        if nj > 0 {
            s += vij * S::from_f64_lit(nj as f64);
        }
    }
    s
}

/// All site potentials; the optimizer keeps these incrementally.
pub fn site_potentials<S: Scalar>(occ: &Occupation, cm: &CouplingMatrix<S>) -> Vec<S> {
    (0..cm.dim()).map(|i| site_potential(occ, cm, i)).collect()
}

/// ε = [ −μΣn_i + (V/2)Σ_{i≠j}Ṽ_{ij}n_in_j + (V/2)Σ_iṼ_{ii}n_i²
///       + (U/2)Σ_in_i(n_i−1) ] / p.
pub fn energy_per_site<S: Scalar>(
    occ: &Occupation,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<EnergyBreakdown<S>, EnergyError> {
    check(occ, cm, params)?;
    let p = S::from_f64_lit(cm.dim() as f64);
    let half = S::from_f64_lit(0.5);
    let mut total_n = S::zero();
    let mut pair = S::zero();
    let mut selfc = S::zero();
    let mut onsite = S::zero();
    for i in 0..cm.dim() {
        let ni = occ.n[i];
        if ni == 0 {
            continue;
        }
        let nif = S::from_f64_lit(ni as f64);
        total_n += nif;
        let si = site_potential(occ, cm, i);
        pair += nif * (si - cm.get(i, i) * nif);
        selfc += cm.get(i, i) * nif * nif;
        onsite += nif * (nif - S::one());
    }
    let eps_mu = -params.mu * total_n / p;
    let eps_pair = half * params.v * pair / p;
    let eps_self = half * params.v * selfc / p;
    let eps_onsite = half * params.u_eff() * onsite / p;
    Ok(EnergyBreakdown {
        eps_total: eps_mu + eps_pair + eps_self + eps_onsite,
        eps_mu,
        eps_pair,
        eps_self,
        eps_onsite,
    })
}

/// Total cell energy (= ε·p); the quantity the delta operations change.
pub fn cell_energy<S: Scalar>(
    occ: &Occupation,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<S, EnergyError> {
    let e = energy_per_site(occ, cm, params)?;
    Ok(e.eps_total * S::from_f64_lit(cm.dim() as f64))
}

/// ΔE of inserting one boson at site i, given the current site potential S_i.
#[inline]
pub fn delta_insert_with<S: Scalar>(
    occ: &Occupation,
    i: usize,
    s_i: S,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<S, EnergyError> {
    if params.is_hardcore() && occ.n[i] != 0 {
        return Err(EnergyError::IllegalOperation);
    }
    let half = S::from_f64_lit(0.5);
    Ok(-params.mu
        + params.v * s_i
        + half * params.v * cm.get(i, i)
        + params.u_eff() * S::from_f64_lit(occ.n[i] as f64))
}

/// ΔE of removing one boson from site i.
#[inline]
pub fn delta_remove_with<S: Scalar>(
    occ: &Occupation,
    i: usize,
    s_i: S,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<S, EnergyError> {
    if occ.n[i] == 0 {
        return Err(EnergyError::IllegalOperation);
    }
    let half = S::from_f64_lit(0.5);
    Ok(params.mu - params.v * s_i + half * params.v * cm.get(i, i)
        - params.u_eff() * S::from_f64_lit((occ.n[i] - 1) as f64))
}

/// ΔE of moving one boson from site i to site j.
#[inline]
pub fn delta_move_with<S: Scalar>(
    occ: &Occupation,
    i: usize,
    j: usize,
    s_i: S,
    s_j: S,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<S, EnergyError> {
    if occ.n[i] == 0 || (params.is_hardcore() && i != j && occ.n[j] != 0) {
        return Err(EnergyError::IllegalOperation);
    }
    if i == j {
        return Ok(S::zero());
    }
    let half = S::from_f64_lit(0.5);
    let two = S::from_f64_lit(2.0);
    let pair_self = half
        * params.v
        * (two * (s_j - s_i) + cm.get(i, i) + cm.get(j, j) - two * cm.get(i, j));
    let onsite =
        params.u_eff() * S::from_f64_lit(occ.n[j] as f64 - occ.n[i] as f64 + 1.0);
    Ok(pair_self + onsite)
}

pub fn delta_insert<S: Scalar>(
    occ: &Occupation,
    i: usize,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<S, EnergyError> {
    check(occ, cm, params)?;
    delta_insert_with(occ, i, site_potential(occ, cm, i), cm, params)
}

pub fn delta_remove<S: Scalar>(
    occ: &Occupation,
    i: usize,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<S, EnergyError> {
    check(occ, cm, params)?;
    delta_remove_with(occ, i, site_potential(occ, cm, i), cm, params)
}

pub fn delta_move<S: Scalar>(
    occ: &Occupation,
    i: usize,
    j: usize,
    cm: &CouplingMatrix<S>,
    params: &ModelParams<S>,
) -> Result<S, EnergyError> {
    check(occ, cm, params)?;
    delta_move_with(
        occ,
        i,
        j,
        site_potential(occ, cm, i),
        site_potential(occ, cm, j),
        cm,
        params,
    )
}

/// n_i ↦ 1 − n_i. Hardcore occupations only.
pub fn particle_hole(occ: &Occupation) -> Result<Occupation, EnergyError> {
    if occ.n.iter().any(|&n| n > 1) {
        return Err(EnergyError::SoftcoreUnsupported);
    }
    Ok(Occupation {
        n: occ.n.iter().map(|&n| 1 - n).collect(),
    })
}
