//! Supersymmetric forms of stochastic dynamics on compact phase spaces.
//!
//! The crate discretizes the generalized Fokker-Planck evolution operator acting on
//! differential forms, computes its graded spectrum, and classifies the dynamical phase
//! from the spectral gap structure.

pub mod error;
pub mod exterior;
pub mod fokker_planck;
pub mod linalg;
pub mod mesh;
pub mod models;
pub mod morse;
pub mod sim;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};

/// Library version string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
