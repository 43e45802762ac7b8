use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("class count mismatch: {left} vs {right}")]
    ClassCountMismatch { left: usize, right: usize },

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergedTraining { epoch: usize, loss: f64 },

    #[error("too few samples: {samples} units for {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },

    #[error("model kind {0} does not support this operation")]
    UnsupportedModelKind(&'static str),

    #[error("too many models: {0} (at most 20 supported)")]
    TooManyModels(usize),

    #[error("degenerate calibration system: {0}")]
    DegenerateSystem(String),

    #[error("invalid bandwidth {0}: must lie in (0, 0.5]")]
    InvalidBandwidth(f64),

    #[error("empty reference set: {0}")]
    EmptyReference(&'static str),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),

    #[error("dataset layout: {0}")]
    Layout(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
