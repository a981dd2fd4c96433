use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the segmentation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed image file: {0}")]
    Malformed(String),

    #[error("invalid image dimensions {width}x{height}")]
    Dimensions { width: usize, height: usize },

    #[error("invalid pixel data: {0}")]
    InvalidPixels(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid evaluation matrix: {0}")]
    InvalidMatrix(String),

    #[error("infeasible phantom geometry: {0}")]
    InfeasiblePhantom(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
