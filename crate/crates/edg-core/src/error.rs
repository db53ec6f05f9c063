//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by any public operation in this crate.
#[derive(Error, Debug)]
pub enum EdgError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid input shape {shape:?} ({detail})")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        detail: String,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("node handle {id} is not on this graph (len {len})")]
    HandleNotOnGraph { id: usize, len: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("missing gradient for parameter {index} ({name})")]
    MissingGrad { index: usize, name: String },
    #[error("finite-difference check: f is non-smooth near parameter {param} coordinate {coord} (one-sided slopes {left} vs {right})")]
    NonSmooth {
        param: usize,
        coord: usize,
        left: f64,
        right: f64,
    },
    #[error("too few source domains: need at least d+1 = {need}, got {got}")]
    TooFewDomains { need: usize, got: usize },
    #[error("target domain at horizon {horizon} does not exist (dataset has {available} target domains)")]
    MissingTarget { horizon: usize, available: usize },
    #[error("target-domain samples reached a training path (domain index {index})")]
    TargetLeak { index: usize },
    #[error("config: {0}")]
    Config(String),
    #[error("dataset file: {0}")]
    DataFormat(String),
    #[error("IDX file: {0}")]
    IdxFormat(String),
    #[error("checkpoint file: {0}")]
    CheckpointFormat(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("episode aborted: non-finite loss at {context}")]
    NonFiniteLoss { context: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EdgError>;
