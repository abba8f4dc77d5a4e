use thiserror::Error;

/// Errors surfaced by the library modules.
#[derive(Debug, Error)]
pub enum NapError {
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("batch too small for ranking")]
    BatchTooSmall,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("zero rank variance")]
    ZeroRankVariance,
    #[error("empty reference")]
    EmptyReference,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("empty remainder")]
    EmptyRemainder,
    #[error("unreachable operating point")]
    UnreachableOperatingPoint,
    #[error("degenerate target")]
    DegenerateTarget,
    #[error("empty corpus spec")]
    EmptyCorpusSpec,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("unknown {kind} '{name}', valid: {valid}")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },
    #[error("missing target field '{0}' in record '{1}'")]
    MissingTarget(String, String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NapError>;
