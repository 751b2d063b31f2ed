//! Harness around the `accsmbo` library: experiment configuration, dataset
//! and metalearning-record ingestion, seeded benchmark execution, and
//! trace/report emission.
//!
//! Everything here is deterministic given the config file and its seeds;
//! wall-clock columns are the one exception and are excluded from stability
//! comparisons (see [`trace::strip_wall_column`]).

pub mod config;
pub mod data;
pub mod trace;

use std::fmt;

pub use config::{ExperimentConfig, ObjectiveSpec, OptimizerSpec};
pub use data::{
    gen_classification, gen_meta_values, read_meta_records, read_svmlight, write_meta_records,
    write_svmlight, MetaDistribution, SparseData,
};
pub use trace::{
    emit_report, emit_trace, parse_trace, run_benchmark, strip_wall_column, Aggregates,
    BenchmarkReport, RunRecord,
};

/// One failure mode per CLI error category; the binary prints
/// `error: category=<category>: <message>` and exits nonzero.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The experiment config is missing, unparsable, or fails validation.
    #[error("{0}")]
    Config(String),
    /// An input file (dataset, metalearning CSV, trace CSV) is malformed.
    #[error("{0}")]
    Data(String),
    /// A filesystem operation failed.
    #[error("{0}")]
    Io(String),
    /// The optimizer or a model fit failed during a run.
    #[error(transparent)]
    Run(#[from] accsmbo::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Io(_) => "io",
            CliError::Run(_) => "run",
        }
    }

    /// An I/O error annotated with the path it touched.
    pub fn io(path: impl fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{path}: {err}"))
    }

    /// A data error annotated with its file and line number.
    pub fn at_line(path: impl fmt::Display, line: usize, message: impl fmt::Display) -> Self {
        CliError::Data(format!("{path}:{line}: {message}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
