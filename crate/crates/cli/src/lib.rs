//! Configuration-driven runner around the `sqforms` library.

pub mod config;
pub mod report;
pub mod run;

use thiserror::Error;

/// Exit status for configuration and precondition failures.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for numerical and I/O failures during a run.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<sqforms::Error> for CliError {
    fn from(e: sqforms::Error) -> Self {
        use sqforms::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidResolution(_)
            | E::Topology(_)
            | E::Degree(_)
            | E::DeterministicLimit(_)
            | E::UnsupportedMesh(_)
            | E::UnsupportedBackend(_)
            | E::NotPotential(_)
            | E::InvalidNoise(_)
            | E::InvalidArgument(_)
            | E::Statistics(_)
            | E::Parse(_) => CliError::Validation(msg),
            E::Capacity(_)
            | E::Numerical { .. }
            | E::Consistency(_)
            | E::ErgodicZeroMissing(_)
            | E::IndeterminateIndex(_)
            | E::NoInstanton(_)
            | E::Unfittable(_) => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
