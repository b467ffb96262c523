//! Crate-wide error type.
//!
//! Every fallible operation returns [`LabError`]. Variants mirror the failure
//! classes surfaced by the public API: shape/dimension violations, invalid
//! configuration, capacity overruns (sequence longer than a bank), contract
//! violations (misuse of an op), serialization problems, and aborted training.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch in {op}: left shape {left:?}, right shape {right:?}")]
    Dim {
        op: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("shape {shape:?} requires {expected} elements but data has {got}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at flat index {index} in {what}")]
    NonFinite { what: String, index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("training aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }
    pub fn capacity(msg: impl Into<String>) -> Self {
        LabError::Capacity(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        LabError::Contract(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        LabError::Format(msg.into())
    }
    pub fn dim(op: &str, left: &[usize], right: &[usize]) -> Self {
        LabError::Dim {
            op: op.to_string(),
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
