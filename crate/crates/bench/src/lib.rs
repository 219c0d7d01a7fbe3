//! Experiment driver for the `ialspp` solvers: timed training runs with
//! periodic holdout evaluation, JSON-lines logs and sweep summaries.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod records;
pub mod summary;

use std::path::PathBuf;

pub use config::{BlockSize, DataSource, ExperimentConfig};
pub use experiment::run_experiment;
pub use records::{emit_metrics_log, parse_metrics_log, EpochRecord, Record, RecordWriter, RunHeader};
pub use summary::{summarize_sweep, write_summary, SummaryRow};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ialspp::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("invalid experiment: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
