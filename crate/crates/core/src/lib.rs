//! Ground-state solver for bosonic lattice models with algebraically decaying
//! density-density interactions.
//!
//! The pipeline: enumerate periodic unit cells on the integer lattice
//! ([`zcell`]), embed them onto a physical lattice ([`geometry`]), resum the
//! long-range couplings into the thermodynamic limit ([`couplings`]), and
//! optimize occupation configurations per cell ([`energy`], [`optimizer`]).
//! Model presets and phase-diagram sweeps live in [`models`], file emitters in
//! [`report`].

pub mod couplings;
pub mod energy;
pub mod geometry;
pub mod models;
pub mod optimizer;
pub mod pattern;
pub mod report;
pub mod scalar;
pub mod zcell;

pub use scalar::Scalar;

/// Default floating-point type used by the CLI and the concrete aliases.
pub type Real = f64;

pub type LatticeSpec = geometry::LatticeSpec<Real>;
pub type EmbeddedCell = geometry::EmbeddedCell<Real>;
pub type CouplingMatrix = couplings::CouplingMatrix<Real>;
pub type ResumParams = couplings::ResumParams;
pub type ModelParams = energy::ModelParams<Real>;
pub type EnergyBreakdown = energy::EnergyBreakdown<Real>;
pub type SearchResult = optimizer::SearchResult<Real>;
pub type PhaseDiagram = models::PhaseDiagram<Real>;
