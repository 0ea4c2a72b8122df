//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("duplicate event pair ({0}, {1})")]
    DuplicatePair(String, String),

    #[error("cycle detected in a graph expected to be acyclic")]
    CycleDetected,

    #[error("timelines cover different event-id sets")]
    MismatchedEvents,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid record: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
