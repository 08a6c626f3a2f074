//! Experiment runner for the decomposed ELM solvers: configuration,
//! subcommands and report writers.

pub mod commands;
pub mod config;
pub mod report;

use ddelm::DdelmError;
use thiserror::Error;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] DdelmError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub const EXIT_OK: i32 = 0;
/// A check ran but did not pass.
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(e) => match e {
                DdelmError::NotConverged { .. } => EXIT_NOT_CONVERGED,
                DdelmError::InvalidParameter { .. }
                | DdelmError::InvalidPartition(_)
                | DdelmError::UnknownProblem(_)
                | DdelmError::SizeGuard { .. } => EXIT_CONFIG,
                _ => EXIT_FAILED,
            },
            CliError::Io(_) => EXIT_FAILED,
        }
    }
}
