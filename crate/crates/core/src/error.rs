use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the saliency toolkit.
#[derive(Debug, Error)]
pub enum HcaError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl HcaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HcaError::Io { path: path.into(), source }
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        HcaError::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }

    /// True for failures reading or writing files, including undecodable images.
    pub fn is_io(&self) -> bool {
        matches!(self, HcaError::Io { .. } | HcaError::Decode { .. })
    }
}

pub type Result<T> = std::result::Result<T, HcaError>;
