//! Experiment runner behind the `sphere-pint` binary.

pub mod commands;
pub mod config;
mod output;

use sphere_pint::pint::PintError;
use thiserror::Error;

pub use commands::{run_pint, run_serial, stability, viscosity_table};
pub use config::{ConfigError, ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Outputs up to the failure have been written.
    #[error("numerical blow-up: {0}")]
    BlowUp(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::BlowUp(_) => 3,
            RunError::Other(_) => 1,
        }
    }
}

impl From<PintError> for RunError {
    fn from(e: PintError) -> Self {
        match e {
            PintError::InvalidConfig(m) => RunError::Config(ConfigError::Invalid(m)),
            other => RunError::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Other(e.into())
    }
}
