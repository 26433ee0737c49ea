use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {message}")]
    Validation {
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate user_id `{user_id}` (line {line}, first seen on line {first_line})")]
    CorpusConflict {
        user_id: String,
        first_line: usize,
        line: usize,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: expected dimension {expected}, got {found}")]
    Shape { expected: usize, found: usize },

    #[error("neighbor set is empty")]
    NoNeighbors,

    #[error("no ground-truth label for user `{0}`")]
    MissingLabel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid trace for `{user_id}`: {message}")]
    InvalidTrace { user_id: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-parseable code for diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Validation { .. } => "E_VALIDATION",
            Error::CorpusConflict { .. } => "E_CONFLICT",
            Error::Schema(_) => "E_SCHEMA",
            Error::InsufficientData(_) => "E_INSUFFICIENT_DATA",
            Error::Shape { .. } => "E_SHAPE",
            Error::NoNeighbors => "E_NO_NEIGHBORS",
            Error::MissingLabel(_) => "E_MISSING_LABEL",
            Error::InvalidParameter(_) => "E_PARAMETER",
            Error::InvalidTrace { .. } => "E_TRACE",
        }
    }
}
