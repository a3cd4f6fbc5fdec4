use thiserror::Error;

/// Errors raised by mesh construction, operator assembly and analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("degree error: {0}")]
    Degree(String),
    #[error("deterministic limit: {0}")]
    DeterministicLimit(String),
    #[error("unsupported mesh: {0}")]
    UnsupportedMesh(String),
    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),
    #[error("flow is not a potential (Langevin) flow: {0}")]
    NotPotential(String),
    #[error("invalid noise: {0}")]
    InvalidNoise(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("numerical failure in {block}: {message}")]
    Numerical { block: String, message: String },
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("no ergodic zero mode: {0}")]
    ErgodicZeroMissing(String),
    #[error("indeterminate index: {0}")]
    IndeterminateIndex(String),
    #[error("no instanton: {0}")]
    NoInstanton(String),
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("unfittable correlation: {0}")]
    Unfittable(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
