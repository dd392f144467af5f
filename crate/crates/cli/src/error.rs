use std::path::PathBuf;

use cqrt_core::{FpError, SdeError, StatsError};
use thiserror::Error;

/// Failure of a run, grouped by the exit status it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical instability: {0}")]
    Instability(String),
    #[error("statistics failure: {0}")]
    Statistics(String),
    #[error("acceptance failure: {}", .0.join("; "))]
    Acceptance(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Instability(_) => 3,
            CliError::Statistics(_) | CliError::Acceptance(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Instability(other.to_string()),
        }
    }
}

impl From<FpError> for CliError {
    fn from(e: FpError) -> Self {
        match e {
            FpError::InvalidProblem(_) | FpError::Wave(_) => CliError::Config(e.to_string()),
            other => CliError::Instability(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::InvalidBins(_) => CliError::Config(e.to_string()),
            other => CliError::Statistics(other.to_string()),
        }
    }
}
