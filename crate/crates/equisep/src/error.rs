//! Error types shared across the toolkit.

use thiserror::Error;

/// All failure modes of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("label {label} out of range (num_classes = {num_classes})")]
    Label { label: usize, num_classes: usize },

    #[error("sampling error: class {class} has {available} examples, {requested} requested")]
    Sampling {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("integrity error for {path}: expected sha256 {expected}, found {found}")]
    Integrity {
        path: String,
        expected: String,
        found: String,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fewer than 2 classes present in the data")]
    DegenerateClasses,

    #[error("no between-class signal: all scatter eigenvalues below threshold")]
    ZeroSignal,

    #[error("non-positive separation fuzziness at layer {layer}: cannot take log")]
    LogDomain { layer: usize },

    #[error("insufficient points for a law fit: {found} < {required}")]
    InsufficientPoints { found: usize, required: usize },

    #[error("numerical failure at epoch {epoch}: {reason}")]
    NumericalFailure { epoch: usize, reason: String },

    #[error("sweep failure: every learning rate diverged")]
    SweepFailure,

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("index error: {0}")]
    Index(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
