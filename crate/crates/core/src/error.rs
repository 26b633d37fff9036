use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: expected {expected}, found {found}")]
    InvalidDimension { expected: usize, found: usize },

    #[error("degenerate similarity: {0} is an all-zero vector")]
    DegenerateSimilarity(&'static str),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("column `{column}` not found in {path} (have: {available})")]
    UnknownColumn {
        column: String,
        path: PathBuf,
        available: String,
    },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("graph integrity error: {0}")]
    GraphIntegrity(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("invalid spec: {0}")]
    Spec(String),

    #[error("group {0} is absent from the evaluation mask")]
    UndefinedGroup(usize),

    #[error("undefined conditional: {0}")]
    UndefinedConditional(String),

    #[error("empty evaluation mask")]
    EmptyEvaluation,

    #[error("class {0} has no training nodes")]
    MissingClass(usize),

    #[error("model/dataset mismatch: {0}")]
    Mismatch(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad arguments: an invalid configuration or
    /// a schema that names a column the file does not have.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::Spec(_) | Error::InvalidDimension { .. } | Error::UnknownColumn { .. }
        )
    }

    /// True for errors caused by the input data rather than the runtime.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Parse { .. }
                | Error::GraphIntegrity(_)
                | Error::Split(_)
                | Error::MissingClass(_)
                | Error::Mismatch(_)
                | Error::Format { .. }
        )
    }
}
