use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data: {0}")]
    CorruptData(String),
    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("singular covariance matrix")]
    SingularCovariance,
    #[error("image too small for the scale space: {width}x{height} (minimum 16x16)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("template has no keypoints")]
    EmptyTemplate,
    #[error("score set needs at least one genuine and one impostor score")]
    EmptyScores,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse failure: {0}")]
    Parse(String),
    #[error("calibration and evaluation manifests overlap: {0}")]
    OverlapDetected(String),
}

/// Coarse error grouping used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Usage,
    Io,
    Data,
    Internal,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Usage => 2,
            ErrorFamily::Io => 3,
            ErrorFamily::Data => 4,
            ErrorFamily::Internal => 5,
        }
    }
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::InvalidParameter(_) => ErrorFamily::Usage,
            Error::FileNotFound(_) | Error::Io { .. } => ErrorFamily::Io,
            Error::SingularCovariance => ErrorFamily::Internal,
            _ => ErrorFamily::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
