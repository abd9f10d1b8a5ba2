//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    FileRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    FileWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {col}: cannot parse {value:?} as a finite real")]
    BadCell {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("need at least 2 samples, got {found}")]
    TooFewRows { found: usize },

    #[error("column {name:?} has zero sample variance")]
    ZeroVarianceColumn { name: String },

    #[error("coordinate subset is empty")]
    EmptyDims,

    #[error("coordinate subset {dims:?} is invalid for dimension {d}")]
    BadDims { dims: Vec<usize>, d: usize },

    #[error("sample index {index} out of range for {n} samples")]
    SampleOutOfRange { index: usize, n: usize },

    #[error("bandwidth must be positive, got {h}")]
    BadBandwidth { h: f64 },

    #[error("functional argument must be positive, got {u}")]
    NonPositiveRatio { u: f64 },

    #[error("need at least 2 variables, got {d}")]
    TooFewVariables { d: usize },

    #[error("matrix is asymmetric (max deviation {max_dev:e})")]
    AsymmetricMatrix { max_dev: f64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("weight system is infeasible: {0}")]
    InfeasibleWeights(String),

    #[error("weight solver failed: {0}")]
    SolverFailure(String),

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("p-value {p} outside [0, 1]")]
    BadProbability { p: f64 },

    #[error("quadrature grid too coarse: refinement moved the value by {delta:e}")]
    GridTooCoarse { delta: f64 },

    #[error("malformed report file {path}: {reason}")]
    ReportFormat { path: PathBuf, reason: String },

    #[error("plot input has no data rows")]
    PlotEmpty,

    #[error("{count} trial(s) failed during the experiment run")]
    FailedTrials { count: usize },
}

impl Error {
    /// True for errors caused by bad inputs or configuration (CLI exit
    /// code 2), false for numerical/runtime failures (exit code 3).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SolverFailure(_)
                | Error::InfeasibleWeights(_)
                | Error::GridTooCoarse { .. }
                | Error::FailedTrials { .. }
                | Error::FileWrite { .. }
        )
    }
}
