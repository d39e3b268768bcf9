use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown label column {0:?}")]
    UnknownLabelColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid label {value:?} at row {row}: {reason}")]
    InvalidLabel {
        row: usize,
        value: String,
        reason: String,
    },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("unknown feature name {0:?} in metadata")]
    UnknownFeature(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("embedding provider error: {0}")]
    Provider(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("insufficient samples: replay holds {available}, batch needs {requested}")]
    InsufficientSamples { available: usize, requested: usize },

    #[error("undefined 1-RAE: validation targets are constant")]
    UndefinedRae,

    #[error("metric {metric} is incompatible with task {task}")]
    IncompatibleMetric { metric: String, task: String },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
