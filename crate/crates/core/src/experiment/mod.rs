//! Experiment documents, sweeps and result emission.

pub mod config;
pub mod output;
pub mod sweep;

use thiserror::Error;

use crate::bound::BoundError;
use crate::policy::PolicyError;

pub use config::{
    parse_arms, parse_config, preset, resolve_parallelism, ExperimentConfig, SweepPoint,
};
pub use output::{emit_results, read_csv, render, sig9, write_records_csv, Format};
pub use sweep::{
    run_sweep, run_sweep_with, Execution, SweepReport, SweepRow, TrialOutcome, TrialRecord,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ExperimentError::Parse { .. } | ExperimentError::Validation(_)
        )
    }
}
