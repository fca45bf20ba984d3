//! Batch front end: one task per run, configured by a TOML file, reporting a
//! CSV table and a JSON summary.

pub mod config;
pub mod output;
pub mod tasks;

use qes_core::QesError;
use thiserror::Error;

pub use config::RunConfig;
pub use output::TaskReport;
pub use tasks::{run_task, Task};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Computation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<QesError> for CliError {
    fn from(e: QesError) -> Self {
        CliError::Computation(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Computation(_) | CliError::Io(_) => 1,
        }
    }
}
