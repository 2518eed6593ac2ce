use thiserror::Error;

use crate::model::SubsetKey;

/// Errors produced by the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error(
        "N = {n} exceeds the subset cap of {cap} ({subsets} subset problems); \
         raise the cap explicitly to proceed"
    )]
    SubsetCapExceeded { n: usize, cap: usize, subsets: u64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("policy table has no entry for subset {0}")]
    MissingSubset(SubsetKey),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite objective {value} at point {point:?}")]
    NonFiniteObjective { value: f64, point: Vec<f64> },

    #[error("trace too short: {len} samples, need at least {min}")]
    TraceTooShort { len: usize, min: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
