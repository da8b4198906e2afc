use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the mapping engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("mask selects no pixels")]
    EmptyMask,

    #[error("non-positive depth {value} at index {index}")]
    NonPositiveDepth { index: usize, value: f64 },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate pose: {0}")]
    DegeneratePose(&'static str),

    #[error("invalid noise model: {0}")]
    InvalidNoise(&'static str),

    #[error("scene too small: {0}")]
    SceneTooSmall(&'static str),

    #[error("invalid scene: {0}")]
    InvalidScene(&'static str),

    #[error("unknown prior kind `{0}`")]
    UnknownPriorKind(String),

    #[error("prior kind {0} defines no NIG prior")]
    PriorUnavailable(&'static str),

    #[error("perturbation of `{param}` by {step} leaves the valid domain")]
    DomainBoundary { param: &'static str, step: f64 },

    #[error("map contains no surface voxels")]
    EmptyMap,

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter { name, value, reason }
    }

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
