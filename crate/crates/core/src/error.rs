use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode WAV {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("empty audio")]
    EmptyAudio,

    #[error("sample rate {0} Hz is below the 8000 Hz minimum")]
    SampleRateTooLow(u32),

    #[error("audio has {len} samples, need at least {need}")]
    AudioTooShort { len: usize, need: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("value {0} overflows binary16")]
    HalfOverflow(f32),

    #[error("PCA needs at least {need} training vectors, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("fingerprint kind mismatch: expected {expected}, got {actual}")]
    KindMismatch { expected: &'static str, actual: &'static str },

    #[error("database is empty")]
    EmptyDatabase,

    #[error("duplicate content id {0:?}")]
    DuplicateId(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u16 },

    #[error("file is truncated")]
    Truncated,

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("index was built from a different database")]
    IndexDbMismatch,

    #[error("{tool} unavailable: {reason}")]
    ToolUnavailable { tool: String, reason: String },

    #[error("external tool {tool} failed: {reason}")]
    ToolFailed { tool: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

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
}
