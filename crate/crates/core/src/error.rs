use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("every lane is already occupied")]
    AllLanesOccupied,
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("embedding is empty")]
    EmptyEmbedding,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("positive set is empty")]
    EmptyPositiveSet,
    #[error("batch of {0} anchors is too small (need at least 2)")]
    BatchTooSmall(usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dataset was generated in `{dataset}` mode but method `{method}` needs `{expected}` data")]
    DatasetMethodMismatch {
        dataset: String,
        method: String,
        expected: String,
    },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("target is constant; R² undefined")]
    ConstantTarget,
    #[error("bad magic in {0}")]
    BadMagic(PathBuf),
    #[error("{path}: expected {expected} bytes, found {found}")]
    TruncatedBlob {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("index {index} out of range (count {count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("pixel value {value} at offset {offset} outside [0,1]")]
    PixelOutOfRange { offset: usize, value: f32 },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("config: {0}")]
    Config(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
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

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
