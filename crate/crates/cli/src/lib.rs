//! Batch experiment runner behind the `sandwich` binary.
//!
//! Every subcommand reads an [`ExperimentConfig`], writes its outputs into
//! one directory and stamps each file with the config hash, the seed and
//! the crate version. Parallel work draws from per-index derived streams,
//! so outputs do not depend on the thread count.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use thiserror::Error;

pub use commands::{default_verify_config, run, run_builtin_verify, Command, Fault, RunOptions};
pub use config::{ExperimentConfig, PartitionSource};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] sandwich_core::Error),
    #[error("solver stopped at the iteration limit")]
    IterationLimit,
    #[error("verification failed: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
}

impl CliError {
    /// Process exit code: 1 config or input, 2 infeasible, 3 iteration
    /// limit, 4 capacity, 5 failed verification.
    pub fn exit_code(&self) -> i32 {
        use sandwich_core::Error as E;
        match self {
            Self::Config(_) | Self::Io(_) => 1,
            Self::Core(E::EmptySet) => 2,
            Self::Core(E::Capacity { .. }) => 4,
            Self::Core(_) => 1,
            Self::IterationLimit => 3,
            Self::VerifyFailed(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
