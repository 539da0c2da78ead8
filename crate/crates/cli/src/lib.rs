//! Command implementations behind the `sturm` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

/// Failures mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// A computed quantity exceeded its configured bound.
    #[error("bound exceeded: {0}")]
    Bound(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("computation failed: {0}")]
    Compute(#[from] sturm_core::Error),

    #[error("output: {0}")]
    Io(#[from] std::io::Error),

    /// The requested level is not in the computed spectrum.
    #[error("no such level: {0}")]
    Level(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Bound(_) => 1,
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
            CliError::Level(_) => 4,
        }
    }
}
