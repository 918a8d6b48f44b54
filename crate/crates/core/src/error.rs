use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: index {index} out of range for length {len}")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid sparse matrix: {0}")]
    InvalidSparse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: ragged feature row (expected {expected} features, found {found})")]
    RaggedRow {
        file: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{file}:{line}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange {
        file: PathBuf,
        line: usize,
        label: i64,
        num_classes: usize,
    },

    #[error("node {node} assigned to both {first} and {second} splits")]
    OverlappingMasks {
        node: usize,
        first: String,
        second: String,
    },

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("feature row of node {node} has zero norm")]
    ZeroNormRow { node: usize },

    #[error("matrix is not symmetric (|a[{row}][{col}] - a[{col}][{row}]| = {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("graph fails the theory assumptions: {0}")]
    AssumptionFailed(String),

    #[error("worker {worker} failed in round {round}: {msg}")]
    Worker {
        worker: usize,
        round: usize,
        msg: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Configuration errors map to CLI exit code 1, everything else to 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}
