use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate pose: bone {bone} has coincident endpoints")]
    DegeneratePose { bone: usize },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("sequence too short: {len} frames, need at least {min}")]
    SequenceTooShort { len: usize, min: usize },
    #[error("degenerate variance for style element `{0}`")]
    DegenerateVariance(&'static str),
    #[error("frame range {start}..{end} out of bounds for track of {len} frames")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("empty audio")]
    EmptyAudio,
    #[error("empty text")]
    EmptyText,
    #[error("TTS backend unavailable: {0}")]
    TtsUnavailable(String),
    #[error("aligner backend unavailable: {0}")]
    AlignerUnavailable(String),
    #[error("invalid wav data: {0}")]
    InvalidWav(String),
    #[error("duplicate keyframe index {0}")]
    DuplicateKeyIndex(usize),
    #[error("keyframe index {index} outside 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown gesture `{0}`")]
    UnknownGesture(String),
    #[error("invalid speed level {0}, expected 1, 2 or 3")]
    InvalidSpeedLevel(u32),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty sample set")]
    EmptySet,
    #[error("no masked frames to score")]
    NoMaskedFrames,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model not loaded")]
    ModelNotLoaded,
    #[error("invalid motion data: {0}")]
    InvalidMotion(String),
    #[error("invalid controls: {0}")]
    InvalidControls(String),
    #[error("generator failed: {0}")]
    Generator(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
