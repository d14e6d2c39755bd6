use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate output: {0}")]
    Degenerate(String),

    #[error("empty scale ladder: image {width}x{height} exceeds the area cap at every scale")]
    EmptyLadder { width: usize, height: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated: {0}")]
    Truncated(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("checksum mismatch in section {0}")]
    Checksum(String),

    #[error("empty field: {0}")]
    EmptyField(String),

    #[error("empty region")]
    EmptyRegion,

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("rank deficient: only {available} components available, {requested} requested")]
    RankDeficient { available: usize, requested: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("no labeled pixels")]
    NoLabeledPixels,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
