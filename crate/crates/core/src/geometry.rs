//! Physical lattices and the embedding of integer unit cells into real space.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::zcell::{ZCell, ZVector};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("unknown lattice `{0}` (builtins: triangular, kagome_site, kagome_link)")]
    UnknownLattice(String),
    #[error("translation vectors are linearly dependent")]
    DependentTranslations,
    #[error("basis sites {0} and {1} coincide modulo the elementary cell")]
    CoincidentSites(usize, usize),
    #[error("lattice file: {0}")]
    Parse(String),
}

/// Real-space 2-vector in lattice units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Vec2<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Vec2<S> {
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn norm2(self) -> S {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> S {
        self.norm2().sqrt()
    }

    pub fn cross(self, rhs: Self) -> S {
        self.x * rhs.y - self.y * rhs.x
    }
}

impl<S: Scalar> Add for Vec2<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<S: Scalar> Sub for Vec2<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<S: Scalar> Neg for Vec2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<S: Scalar> Mul<S> for Vec2<S> {
    type Output = Self;
    fn mul(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

/// A physical lattice: elementary translations plus a finite site basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec<S> {
    pub name: String,
    pub t1: Vec2<S>,
    pub t2: Vec2<S>,
    pub basis: Vec<Vec2<S>>,
}

/// Two basis sites closer than this (modulo translations) are coincident.
const COINCIDENCE_TOL: f64 = 1e-9;

impl<S: Scalar> LatticeSpec<S> {
    pub fn new(
        name: impl Into<String>,
        t1: Vec2<S>,
        t2: Vec2<S>,
        basis: Vec<Vec2<S>>,
    ) -> Result<Self, GeometryError> {
        let spec = Self {
            name: name.into(),
            t1,
            t2,
            basis,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if self.t1.cross(self.t2) == S::zero() {
            return Err(GeometryError::DependentTranslations);
        }
        let tol = S::from_f64_lit(COINCIDENCE_TOL);
        for i in 0..self.basis.len() {
            for j in i + 1..self.basis.len() {
                if self.reduced_distance(self.basis[i] - self.basis[j]) < tol {
                    return Err(GeometryError::CoincidentSites(i, j));
                }
            }
        }
        Ok(())
    }

    /// Distance of `d` to the nearest elementary lattice point.
    fn reduced_distance(&self, d: Vec2<S>) -> S {
        // fractional coordinates, folded to the centered cell, then checking
        // the four surrounding lattice points covers obtuse cells too
        let det = self.t1.cross(self.t2);
        let fx = d.cross(self.t2) / det;
        let fy = self.t1.cross(d) / det;
        let (fx, fy) = (fx - fx.round(), fy - fy.round());
        let mut best = S::infinity();
        for dx in [-S::one(), S::zero(), S::one()] {
            for dy in [-S::one(), S::zero(), S::one()] {
                let v = self.t1 * (fx + dx) + self.t2 * (fy + dy);
                best = best.min(v.norm());
            }
        }
        best
    }

    pub fn from_json_str(s: &str) -> Result<Self, GeometryError>
    where
        S: serde::de::DeserializeOwned,
    {
        let raw: LatticeSpec<S> =
            serde_json::from_str(s).map_err(|e| GeometryError::Parse(e.to_string()))?;
        raw.validate()?;
        Ok(raw)
    }

    pub fn basis_size(&self) -> usize {
        self.basis.len()
    }

    /// φ⁻¹: integer lattice coordinates to real space.
    pub fn to_real(&self, z: ZVector) -> Vec2<S> {
        self.t1 * S::from_f64_lit(z.p as f64) + self.t2 * S::from_f64_lit(z.q as f64)
    }
}

/// Builtin lattices. Lattice constant 1 (triangular) resp. kagome bond length 1.
pub fn builtin_lattice<S: Scalar>(name: &str) -> Result<LatticeSpec<S>, GeometryError> {
    let f = S::from_f64_lit;
    let v = |x: f64, y: f64| Vec2::new(f(x), f(y));
    let sq3 = 3.0f64.sqrt();
    match name {
        "triangular" => LatticeSpec::new(
            name,
            v(1.0, 0.0),
            v(0.5, sq3 / 2.0),
            vec![v(0.0, 0.0)],
        ),
        "kagome_site" => LatticeSpec::new(
            name,
            v(2.0, 0.0),
            v(1.0, sq3),
            vec![v(0.0, 0.0), v(0.5, sq3 / 2.0), v(-0.5, sq3 / 2.0)],
        ),
        // kagome link midpoints (ruby lattice). t1 spans two kagome cells
        // along x; all six sites must see an identical image environment
        // (uniform coupling row sums), which fixes t1 = (4,0).
        "kagome_link" => LatticeSpec::new(
            name,
            v(4.0, 0.0),
            v(2.0, 2.0 * sq3),
            vec![
                v(0.5, sq3 / 2.0),
                v(-0.5, sq3 / 2.0),
                v(0.0, sq3),
                v(-0.5, -sq3 / 2.0),
                v(0.5, -sq3 / 2.0),
                v(0.0, -sq3),
            ],
        ),
        other => Err(GeometryError::UnknownLattice(other.to_string())),
    }
}

/// A ZCell mapped onto a lattice: supercell translations and site positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedCell<S> {
    pub lattice: String,
    pub zcell: ZCell,
    pub basis_size: usize,
    /// Supercell translation T₁ = Z₁,₁ t₁ + Z₁,₂ t₂.
    pub t1: Vec2<S>,
    /// Supercell translation T₂ = Z₂,₁ t₁ + Z₂,₂ t₂.
    pub t2: Vec2<S>,
    /// Site positions, rep-major then basis-minor: index = l·m + k.
    pub sites: Vec<Vec2<S>>,
}

impl<S: Scalar> EmbeddedCell<S> {
    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    /// "(cell id, lattice name)" provenance pair.
    pub fn source(&self) -> (String, String) {
        (self.zcell.id(), self.lattice.clone())
    }

    /// Rep and basis index of site `i` (inverse of the embedding order).
    pub fn site_origin(&self, i: usize) -> (ZVector, usize) {
        let m = self.basis_size;
        (self.zcell.reps[i / m], i % m)
    }
}

pub fn embed<S: Scalar>(spec: &LatticeSpec<S>, cell: &ZCell) -> EmbeddedCell<S> {
    let mut sites = Vec::with_capacity(cell.reps.len() * spec.basis.len());
    for &rep in &cell.reps {
        let origin = spec.to_real(rep);
        for &delta in &spec.basis {
            sites.push(origin + delta);
        }
    }
    EmbeddedCell {
        lattice: spec.name.clone(),
        zcell: cell.clone(),
        basis_size: spec.basis.len(),
        t1: spec.to_real(cell.pair.z1),
        t2: spec.to_real(cell.pair.z2),
        sites,
    }
}
