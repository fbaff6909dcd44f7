use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {0}")]
    BadMagic(PathBuf),

    #[error("dtype code unknown: {0}")]
    UnknownDtype(u8),

    #[error("payload length mismatch: header declares {expected} values, found {actual}")]
    PayloadLengthMismatch { expected: usize, actual: usize },

    #[error("non-finite payload")]
    NonFinite,

    #[error("invalid tensor: {0}")]
    Shape(String),

    #[error("manifest error for scan `{scan_id}`: {message}")]
    Record { scan_id: String, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty cohort `{0}`")]
    EmptyCohort(String),

    #[error("single-class input: both ID and OOD labels are required")]
    SingleClass,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
