use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown character {ch:?} at position {position}")]
    UnknownCharacter { position: usize, ch: char },

    #[error("empty text")]
    EmptyText,

    #[error("invalid alphabet: {0}")]
    Alphabet(String),

    #[error("invalid model shape: {0}")]
    ShapeConfig(String),

    #[error("image width {width} is below the minimum receptive width {min}")]
    WidthTooSmall { width: usize, min: usize },

    #[error("image height {height} does not match the configured height {expected}")]
    HeightMismatch { height: usize, expected: usize },

    #[error("CTC target needs at least {required} frames, got {frames}")]
    InfeasibleTarget { frames: usize, required: usize },

    #[error("CTC target is empty")]
    EmptyTarget,

    #[error("recognizer gradient has zero standard deviation")]
    DegenerateGradient,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("empty ground-truth word at index {index}")]
    EmptyTruth { index: usize },

    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite {what} at step {step}")]
    NonFinite { step: u64, what: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ShapeConfig(_) | Error::Config(_) | Error::Alphabet(_) => ErrorClass::Config,
            Error::NonFinite { .. } | Error::DegenerateGradient => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
