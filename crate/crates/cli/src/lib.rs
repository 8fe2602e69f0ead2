//! Command-line harness for the beatbench engine: seeded data preparation,
//! training runs, model comparison tables and MAC analysis.
//!
//! Exit codes are a stable contract: 0 success, 1 usage error, 2 input-data
//! error, 3 runtime or numeric failure.

pub mod artifact;
pub mod commands;
pub mod pipeline;
pub mod table;

use beatbench_core::Error as CoreError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }

    /// Engine error text without its category prefix.
    pub fn core_message(e: &CoreError) -> &str {
        match e {
            CoreError::Shape(m) | CoreError::InvalidArgument(m) | CoreError::Data(m) | CoreError::Numeric(m) | CoreError::Io(m) => m,
        }
    }

    /// Engine errors: bad input data and I/O are data errors, everything
    /// else (shape mismatches deep in a run, divergence) is a runtime failure.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Data(m) | CoreError::Io(m) => CliError::Data(m),
            CoreError::InvalidArgument(m) => CliError::Usage(m),
            CoreError::Shape(m) | CoreError::Numeric(m) => CliError::Runtime(m),
        }
    }
}

pub use commands::{run_cli, Cli};
