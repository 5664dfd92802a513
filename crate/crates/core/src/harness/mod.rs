//! Experiment configuration, multi-seed runs, CSV output and diagnostics.

pub mod config;
pub mod diagnostics;
pub mod experiment;
pub mod verify;

use thiserror::Error;

use crate::error::{LearnerError, ModelError, OracleError};

pub use config::{resolve_model, ExperimentConfig, ModelSource, ResolvedModel};
pub use diagnostics::{critic_error_curve, mean_and_std_error, rate_diagnostic, RateDiagnostic};
pub use experiment::{run_experiment, RunSummary, SeedSummary};
pub use verify::{verify_suite, CheckResult, VerifyReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration; the CLI exits with status 2.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Data(String),
}

impl HarnessError {
    pub(crate) fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        HarnessError::Io { context: context.to_string(), source }
    }
}
