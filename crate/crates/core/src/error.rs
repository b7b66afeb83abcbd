use crate::apparatus::{DetectorId, SlitLabel};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter `{name}` must be strictly positive and finite, got {value}")]
    NegativeParameter { name: &'static str, value: f64 },

    #[error("delayed-choice ordering violated: {0}")]
    DelayedChoiceOrderViolated(String),

    #[error("detector {det} is reachable from slit {slit} but no idler segment is configured")]
    UnreachableDetector { slit: SlitLabel, det: DetectorId },

    #[error("no optical route exists from slit {slit} to detector {det}")]
    InvalidRoute { slit: SlitLabel, det: DetectorId },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("beam-splitter matrix is not unitary (deviation {0:e})")]
    NonUnitary(f64),

    #[error("requested {requested} pairs exceeds the hard cap of {cap}")]
    CapacityExceeded { requested: usize, cap: usize },

    #[error("{stream} stream is not sorted by timestamp at index {index}")]
    UnsortedStream { stream: &'static str, index: usize },

    #[error("insufficient data for fit: {populated} populated bins, need at least {required}")]
    InsufficientData { populated: usize, required: usize },

    #[error("unknown scenario `{0}` (expected kim-shih, single-slit, timing-sweep or oracle-check)")]
    UnknownScenario(String),

    #[error("oracle check failed: {0}")]
    OracleMismatch(String),

    #[error("malformed event record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
