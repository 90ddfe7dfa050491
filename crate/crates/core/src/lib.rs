//! Degenerate Schrödinger equations with fractional-integral boundary
//! damping: diffusive realization of the damping, a dissipative
//! finite-volume discretization, energy decay and resolvent scans, and a
//! Bessel-function resolvent oracle for power-law coefficients.

pub mod bessel;
pub mod cli;
pub mod diffusive;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod manifest;
pub mod model;
pub mod resolvent;
pub mod spatial;
pub mod tridiag;

pub use error::{Error, Result};
pub use model::{
    classify_kappa, derive_constants, energy, inner_product, BoundaryClass, DegeneracyReport, Kappa,
    KappaTable, ProblemSpec, StateVector, Variant,
};
pub use spatial::{assemble_operator, build_x_grid, SystemOperator, XGrid};
