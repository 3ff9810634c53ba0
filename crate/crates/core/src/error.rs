use thiserror::Error;

#[derive(Debug, Error)]
pub enum NqsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: size {size} exceeds cap {cap}")]
    CapExceeded {
        what: &'static str,
        size: u128,
        cap: usize,
    },

    #[error("FCIDUMP line {line}: {msg}")]
    Fcidump { line: usize, msg: String },

    #[error("configuration {0} is outside the sector")]
    SectorMismatch(String),

    #[error("zero amplitude at configuration {0}")]
    ZeroAmplitude(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NqsError> = std::result::Result<T, E>;
