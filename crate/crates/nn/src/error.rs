use thiserror::Error;

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Core(#[from] sgt_core::Error),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset split `{0}` has no usable windows")]
    EmptySplit(&'static str),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<NnError> for sgt_core::Error {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Core(e) => e,
            other => sgt_core::Error::Generator(other.to_string()),
        }
    }
}
