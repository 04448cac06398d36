//! Canonical labels for periodic occupation patterns.
//!
//! Two searches can land on the same ordered phase in different clothes: on a
//! doubled cell, in a rotated orientation, or shifted by a lattice vector.
//! `canonical_pattern` strips all of that off. It first reduces the occupation
//! to its own primitive translation cell, then minimizes lexicographically
//! over the lattice point group and the residual translations, so equal keys
//! mean equal phases.

use std::collections::HashMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::Occupation;
use crate::geometry::{EmbeddedCell, LatticeSpec};
use crate::scalar::Scalar;
use crate::zcell::{self, ZVector, ZVectorPair};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("occupation has {0} entries but the cell has {1} sites")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Cell(#[from] zcell::ZCellError),
}

/// Absolute tolerance for matching transformed site positions onto the basis.
const MATCH_TOL: f64 = 1e-7;

/// One space-group operation of the lattice, reduced to integer data: a
/// unimodular action on cell coordinates plus a relabeling of the basis with
/// per-site integer shifts. Fractional translations (as in kagome rotations
/// about a hexagon center) are absorbed into `perm`/`shift`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternOp {
    mat: [[i64; 2]; 2],
    mat_inv: [[i64; 2]; 2],
    perm: Vec<usize>,
    shift: Vec<ZVector>,
}

fn map_z(mat: &[[i64; 2]; 2], z: ZVector) -> ZVector {
    ZVector::new(
        mat[0][0] * z.p + mat[0][1] * z.q,
        mat[1][0] * z.p + mat[1][1] * z.q,
    )
}

fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn apply2(m: &[[f64; 2]; 2], v: (f64, f64)) -> (f64, f64) {
    (m[0][0] * v.0 + m[0][1] * v.1, m[1][0] * v.0 + m[1][1] * v.1)
}

/// All space-group operations of the lattice modulo elementary translations.
///
/// Candidate point actions are integer matrices `M` (entries up to ±2) whose
/// conjugate `A M A⁻¹` by the translation matrix is orthogonal; each is kept
/// if the rotated basis can be matched site-for-site onto the original, for
/// at least one choice of fractional offset. Always contains the identity.
pub fn lattice_ops<S: Scalar>(spec: &LatticeSpec<S>) -> Vec<PatternOp> {
    let a = [
        [spec.t1.x.to_f64_lossy(), spec.t2.x.to_f64_lossy()],
        [spec.t1.y.to_f64_lossy(), spec.t2.y.to_f64_lossy()],
    ];
    let det_a = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let a_inv = [
        [a[1][1] / det_a, -a[0][1] / det_a],
        [-a[1][0] / det_a, a[0][0] / det_a],
    ];
    let basis: Vec<(f64, f64)> = spec
        .basis
        .iter()
        .map(|d| (d.x.to_f64_lossy(), d.y.to_f64_lossy()))
        .collect();
    let m = basis.len();

    let mut ops = Vec::new();
    for m00 in -2i64..=2 {
        for m01 in -2i64..=2 {
            for m10 in -2i64..=2 {
                for m11 in -2i64..=2 {
                    let det = m00 * m11 - m01 * m10;
                    if det.abs() != 1 {
                        continue;
                    }
                    let mat = [[m00, m01], [m10, m11]];
                    let mat_f = [[m00 as f64, m01 as f64], [m10 as f64, m11 as f64]];
                    let r = mat2_mul(&a, &mat2_mul(&mat_f, &a_inv));
                    // R orthogonal <=> RᵀR = 1
                    let dev = [
                        r[0][0] * r[0][0] + r[1][0] * r[1][0] - 1.0,
                        r[0][1] * r[0][1] + r[1][1] * r[1][1] - 1.0,
                        r[0][0] * r[0][1] + r[1][0] * r[1][1],
                    ];
                    if dev.iter().any(|d| d.abs() > 1e-9) {
                        continue;
                    }
                    // inverse of a unimodular matrix stays integer
                    let mat_inv = [[det * m11, -det * m01], [-det * m10, det * m00]];
                    for j0 in 0..m {
                        let r0 = apply2(&r, basis[0]);
                        let tau = (basis[j0].0 - r0.0, basis[j0].1 - r0.1);
                        if let Some((perm, shift)) = match_basis(&r, tau, &basis, &a_inv) {
                            let op = PatternOp { mat, mat_inv, perm, shift };
                            if !ops.contains(&op) {
                                ops.push(op);
                            }
                        }
                    }
                }
            }
        }
    }
    ops
}

/// Matches every rotated-plus-shifted basis site onto a basis site modulo the
/// elementary lattice. Returns the permutation and the integer shifts, or
/// `None` if any site fails to land on the basis.
fn match_basis(
    r: &[[f64; 2]; 2],
    tau: (f64, f64),
    basis: &[(f64, f64)],
    a_inv: &[[f64; 2]; 2],
) -> Option<(Vec<usize>, Vec<ZVector>)> {
    let mut perm = Vec::with_capacity(basis.len());
    let mut shift = Vec::with_capacity(basis.len());
    let mut hit = vec![false; basis.len()];
    for &d in basis {
        let img = apply2(r, d);
        let img = (img.0 + tau.0, img.1 + tau.1);
        let mut found = None;
        for (j, &dj) in basis.iter().enumerate() {
            let frac = apply2(a_inv, (img.0 - dj.0, img.1 - dj.1));
            let s = (frac.0.round(), frac.1.round());
            if (frac.0 - s.0).abs() <= MATCH_TOL && (frac.1 - s.1).abs() <= MATCH_TOL {
                found = Some((j, ZVector::new(s.0 as i64, s.1 as i64)));
                break;
            }
        }
        let (j, s) = found?;
        if hit[j] {
            return None;
        }
        hit[j] = true;
        perm.push(j);
        shift.push(s);
    }
    Some((perm, shift))
}

/// Canonical form of a periodic occupation pattern: the primitive pattern
/// cell in Hermite form together with the occupations on its representatives,
/// minimized over point-group images and translations. Equal keys identify
/// equal phases regardless of the host cell the pattern was found on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternKey {
    /// Hermite triple (a, b, c) of the pattern's own translation cell.
    pub cell: (i64, i64, i64),
    /// Occupations in representative-major, basis-minor order.
    pub values: Vec<u32>,
}

impl PatternKey {
    pub fn num_sites(&self) -> usize {
        self.values.len()
    }

    pub fn filling(&self) -> Ratio<i64> {
        let total: i64 = self.values.iter().map(|&n| i64::from(n)).sum();
        Ratio::new(total, self.values.len() as i64)
    }

    /// FNV-1a over the serialized key; stable across runs and platforms.
    pub fn id(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&self.cell.0.to_le_bytes());
        eat(&self.cell.1.to_le_bytes());
        eat(&self.cell.2.to_le_bytes());
        for &v in &self.values {
            eat(&v.to_le_bytes());
        }
        h
    }

    pub fn describe(&self) -> String {
        let f = self.filling();
        format!(
            "f={}/{} cell=({},{},{}) n={:?}",
            f.numer(),
            f.denom(),
            self.cell.0,
            self.cell.1,
            self.cell.2,
            self.values
        )
    }
}

struct CosetIndex {
    pair: ZVectorPair,
    map: HashMap<(i64, i64), usize>,
}

impl CosetIndex {
    fn new(pair: ZVectorPair, reps: &[ZVector]) -> Self {
        let map = reps
            .iter()
            .enumerate()
            .map(|(i, &r)| (pair.coset_key(r), i))
            .collect();
        Self { pair, map }
    }

    fn rep_of(&self, z: ZVector) -> usize {
        self.map[&self.pair.coset_key(z)]
    }
}

/// Computes the canonical [`PatternKey`] of `occ` on `cell`. `ops` must come
/// from [`lattice_ops`] for the lattice the cell is embedded in; passing only
/// the identity degrades gracefully to translation-only canonicalization.
pub fn canonical_pattern<S: Scalar>(
    cell: &EmbeddedCell<S>,
    occ: &Occupation,
    ops: &[PatternOp],
) -> Result<PatternKey, PatternError> {
    let m = cell.basis_size;
    let reps = &cell.zcell.reps;
    if occ.n.len() != reps.len() * m {
        return Err(PatternError::DimensionMismatch(occ.n.len(), reps.len() * m));
    }
    let host = CosetIndex::new(cell.zcell.pair, reps);

    // the pattern's own translations: host-cell cosets that leave it fixed
    let mut gens = vec![cell.zcell.pair.z1, cell.zcell.pair.z2];
    for &t in reps {
        let invariant = reps.iter().enumerate().all(|(l, &z)| {
            let l_shift = host.rep_of(z + t);
            (0..m).all(|k| occ.n[l * m + k] == occ.n[l_shift * m + k])
        });
        if invariant {
            gens.push(t);
        }
    }
    let prim_pair = zcell::hnf_span(&gens)?;
    let prim = zcell::representatives(prim_pair)?;
    let prim_index = CosetIndex::new(prim_pair, &prim.reps);
    let mut prim_values = Vec::with_capacity(prim.reps.len() * m);
    for &r in &prim.reps {
        let l = host.rep_of(r);
        prim_values.extend_from_slice(&occ.n[l * m..(l + 1) * m]);
    }

    let mut best: Option<PatternKey> = None;
    for op in ops {
        let cand_pair = zcell::hnf_span(&[
            map_z(&op.mat_inv, prim_pair.z1),
            map_z(&op.mat_inv, prim_pair.z2),
        ])?;
        let cand = zcell::representatives(cand_pair)?;
        let triple = (cand_pair.z1.p, cand_pair.z1.q, cand_pair.z2.q);
        for &t in &cand.reps {
            let mut values = Vec::with_capacity(prim_values.len());
            for &r in &cand.reps {
                for k in 0..m {
                    let src = map_z(&op.mat, r + t) + op.shift[k];
                    values.push(prim_values[prim_index.rep_of(src) * m + op.perm[k]]);
                }
            }
            let key = PatternKey { cell: triple, values };
            if best.as_ref().is_none_or(|b| key < *b) {
                best = Some(key);
            }
        }
    }
    // ops always contains the identity, so best is set
    Ok(best.expect("no symmetry operations supplied"))
}
