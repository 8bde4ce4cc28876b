//! Single runs, parameter sweeps and figure reproductions on top of
//! `nvmaser`, writing CSV and JSON into an output directory.

pub mod fig2;
pub mod output;
pub mod settings;
pub mod single;
pub mod sweep;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("{failed} of {total} points failed (limit 20%)")]
    TooManyFailures { failed: usize, total: usize },
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Solver(_) => 3,
            CliError::TooManyFailures { .. } => 4,
        }
    }
}

impl From<nvmaser::Error> for CliError {
    fn from(e: nvmaser::Error) -> Self {
        use nvmaser::Error as E;
        match e {
            E::Config { .. } | E::InvalidParameter { .. } | E::UnknownPreset(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// More than a fifth of the points failing makes the whole run a failure.
pub fn check_failures(failed: usize, total: usize) -> Result<()> {
    if total > 0 && failed * 5 > total {
        Err(CliError::TooManyFailures { failed, total })
    } else {
        Ok(())
    }
}
