//! Library half of the `fracheat` command-line tool: configuration,
//! command dispatch, run records and the validation suite.

pub mod commands;
pub mod config;
pub mod validation;

pub use commands::{execute, execute_with_workers, OutputOptions, RunRecord, RunResult};
pub use config::{resolve, CommandKind, RunConfig, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] fracheat::Error),

    #[error("output error: {0}")]
    Output(String),

    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    /// 0 success, 2 configuration, 3 regime violation, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use fracheat::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Domain(_) | E::Budget(_) | E::MismatchedGrid(_)) => 2,
            CliError::Core(E::Regime { .. }) => 3,
            CliError::Core(E::Factorization { .. } | E::Io(_)) => 4,
            CliError::Output(_) | CliError::Validation(_) => 4,
        }
    }
}
