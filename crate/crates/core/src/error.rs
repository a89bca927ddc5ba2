use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("not enough unobserved candidates: requested {requested}, available {available}")]
    InsufficientPool { requested: usize, available: usize },

    #[error("{kind} index {index} out of range (size {size})")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,

    #[error("item feature encoder is not configured")]
    MissingEncoder,

    #[error("could not generate a connected component after {attempts} attempts")]
    ConnectivityUnattainable { attempts: usize },

    #[error("non-finite value in batch {batch} of epoch {epoch}: {what}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        what: String,
    },

    #[error("non-finite loss during gradient check")]
    NonFiniteLoss,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
