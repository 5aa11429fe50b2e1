use crate::tree::NodeId;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("node {0} does not exist or has been deleted")]
    InvalidNode(NodeId),

    #[error("invalid leaf pair: {0}")]
    InvalidPair(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("subtree of {size} leaves is too small to balance into {arity} parts")]
    TooSmall { size: usize, arity: usize },

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("cannot aggregate reports: {0}")]
    Aggregation(String),

    #[error("malformed tree: {0}")]
    Parse(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
