//! Numerical laboratory for fractional magnetic Schrödinger operators
//! (-Δ_A)^{s/2}, 0 < s < 2, on a periodic pseudospectral grid.
//!
//! The crate builds the operators densely, evaluates fractional powers by
//! eigendecomposition and by a resolvent quadrature, computes boundary values
//! of the free resolvent by limiting absorption, and assembles distorted
//! Fourier transforms, wave operators and the scattering matrix.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distorted_ft;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod potentials;
pub mod resolvent;
pub mod scattering;
pub mod spectral;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use grid::{Grid, SpaceKind, WeightedSpace};
pub use linalg::{CMat, CVec, C64};
pub use operators::{HermitianOperator, QuadratureScheme};
pub use potentials::{PotentialFamily, VectorPotential};
