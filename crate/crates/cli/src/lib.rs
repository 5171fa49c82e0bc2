//! Library surface of the command-line harness, exposed so integration
//! tests drive the commands in-process.

pub mod commands;
pub mod config;
pub mod plot;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Usage or configuration problem (exit code 2).
    #[error("{0}")]
    Config(String),
    /// Runtime, evaluation, or property failure (exit code 1).
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}
