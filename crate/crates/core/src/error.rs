use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Variants are grouped by what went wrong so that front ends can map them
/// onto distinct exit codes: configuration problems, bad input data, and
/// numeric failures during training.
#[derive(Debug, Error)]
pub enum DvpError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no frames matched pattern `{pattern}` in {}", dir.display())]
    NoFramesMatched { dir: PathBuf, pattern: String },

    #[error("directory not found: {}", .0.display())]
    MissingDirectory(PathBuf),

    #[error("mixed resolutions: {} is {found:?}, expected {expected:?}", path.display())]
    MixedResolutions {
        path: PathBuf,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },

    #[error("cannot decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("invalid frame data: {0}")]
    InvalidFrame(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("no valid pixels: occlusion mask is empty")]
    NoValidPixels,

    #[error("flow source failure: {0}")]
    Flow(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DvpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DvpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by command-line front ends.
    pub fn kind(&self) -> ErrorKind {
        match self {
            DvpError::Config(_) | DvpError::CheckpointMismatch(_) => ErrorKind::Config,
            DvpError::NonFinite(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

pub type Result<T, E = DvpError> = std::result::Result<T, E>;
