//! Effective Mori-Zwanzig (EMZ) decompositions of SDE observables computed
//! from a spectral Galerkin discretization of the backward Kolmogorov
//! operator.

pub mod basis;
pub mod emz;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod operator;
pub mod projection;
pub mod spectral;

pub use error::{Error, Result};
