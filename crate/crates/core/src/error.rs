use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("malformed WAV header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unsupported WAV encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample {value} at index {index} exceeds [-1, 1] and would clip at 16-bit depth")]
    Clipping { index: usize, value: f64 },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("invalid sample rate: {0}")]
    InvalidRate(u32),

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: u32, right: u32 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("waveform {0} in the group is silent")]
    SilentWaveform(usize),

    #[error("impulse response is empty or all zero")]
    ZeroImpulseResponse,

    /// Residual (y - d) carries no energy; eSNR is unbounded.
    #[error("anechoic: residual reverberant energy is zero")]
    Anechoic,

    #[error("insufficient decay range for RT60 estimation: {0}")]
    InsufficientDecay(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("mask is not binary")]
    NonBinaryMask,

    #[error("config error: {0}")]
    Config(String),

    #[error("sentence {sentence}, condition {condition}: {source}")]
    Condition {
        sentence: String,
        condition: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
