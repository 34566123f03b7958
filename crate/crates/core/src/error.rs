use std::path::PathBuf;

use thiserror::Error;

/// Every diagnostic the library can raise.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("zero-norm input to the NTK kernel")]
    ZeroNormInput,

    #[error("weight vector is zero")]
    ZeroWeights,

    #[error("training diverged at epoch {epoch}: non-finite weights")]
    Diverged { epoch: usize },

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("recourse precondition violated: instance already receives the positive label")]
    AlreadyPositive,

    #[error("non-finite objective value during recourse search at step {step}")]
    NonFiniteObjective { step: usize },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("unparseable cell at row {row}, column `{column}`: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown category {value:?} at row {row} in column `{column}`")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },

    #[error("numeric column `{0}` is constant (std = 0)")]
    ConstantColumn(String),

    #[error("class {label} has {count} rows; at least 2 are required to split")]
    ClassTooSmall { label: i8, count: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("model format error at line {line}: {reason}")]
    ModelFormat { line: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

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
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a human readable location, e.g. `eps=0.1 seed=2 instance=17`.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
