//! Numerical laboratory for discrete parabolic systems with rough
//! divergence-free drifts: lattice geometry, coefficient validation,
//! implicit evolution with an exact-transpose adjoint, averaged fundamental
//! solutions, and Gaussian-bound probes.

pub mod coefficients;
pub mod config;
pub mod error;
pub mod fundsol;
pub mod gaussbound;
pub mod evolve;
pub mod lattice;
pub mod numerics;
pub mod report;
pub mod suite;

pub use error::{Error, Result};
