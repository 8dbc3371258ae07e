use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate triangle {0}: non-positive area")]
    DegenerateTriangle(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("graph is disconnected")]
    DisconnectedGraph,

    #[error("factorization failed: non-positive pivot {value:e} at row {row}")]
    NotPositiveDefinite { row: usize, value: f64 },

    #[error("IC(0) breakdown: non-positive pivot {value:e} at row {row}")]
    Ic0Breakdown { row: usize, value: f64 },

    #[error("matrix not SPD: <p, Ap> = {0:e}")]
    NotSpd(f64),

    #[error("non-finite value in iterate at iteration {0}")]
    NonFinite(usize),

    #[error("singular local matrix in subdomain {subdomain}: {source}")]
    SingularLocal {
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular coarse matrix: {0}")]
    SingularCoarse(String),

    #[error("non-finite model output at message-passing iteration {0}")]
    ModelNaN(usize),

    #[error("non-finite local correction in subdomain {0}")]
    SubdomainNaN(usize),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
