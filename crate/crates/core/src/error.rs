use thiserror::Error;

/// Errors produced by the segmentation engine and its tooling.
#[derive(Debug, Error)]
pub enum HsdfError {
    #[error("calibration window is empty")]
    EmptyCalibration,
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(usize),
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("symbol string of length {len} is too short for depth {depth} (need at least {need})")]
    StringTooShort { len: usize, depth: usize, need: usize },
    #[error("symbol {symbol} at index {index} is outside an alphabet of size {alphabet}")]
    SymbolOutOfRange { index: usize, symbol: usize, alphabet: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient likelihood history for class {class}: have {have}, need {need}")]
    InsufficientHistory { class: usize, have: usize, need: usize },
    #[error("integration produced a non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("posterior could not be normalized")]
    DegeneratePosterior,
    #[error("malformed input at row {row}: {msg}")]
    MalformedInput { row: usize, msg: String },
    #[error("incompatible traces: {0}")]
    IncompatibleTraces(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = HsdfError> = std::result::Result<T, E>;
