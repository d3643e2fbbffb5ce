use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_SOFT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NON_CONVERGENCE: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] ksme_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(ksme_core::Error::NonConvergence { .. }) => EXIT_NON_CONVERGENCE,
            CliError::Core(ksme_core::Error::Divergence { .. }) => EXIT_DIVERGENCE,
            _ => EXIT_INPUT,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// Finished, but some checks failed or some jobs were flagged.
    SoftFailure(String),
}

impl Status {
    pub fn exit_code(&self) -> u8 {
        match self {
            Status::Pass => EXIT_PASS,
            Status::SoftFailure(_) => EXIT_SOFT_FAILURE,
        }
    }
}

/// Exit code for a command result.
pub fn exit_code(result: &CliResult<Status>) -> u8 {
    match result {
        Ok(status) => status.exit_code(),
        Err(e) => e.exit_code(),
    }
}
