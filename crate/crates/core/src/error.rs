use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("neutrality score {0} is outside [0, 1]")]
    NeutralityOutOfRange(f64),

    #[error("query {query_id}: no score for document {doc_id}")]
    MissingScore { query_id: String, doc_id: String },

    #[error("query {query_id}: document {doc_id} has no sigma")]
    MissingSigma { query_id: String, doc_id: String },

    #[error("query {query_id}: document {doc_id} has no neutrality score")]
    MissingNeutrality { query_id: String, doc_id: String },

    #[error("query {query_id}: document {doc_id} has no group label")]
    UnassignedGroup { query_id: String, doc_id: String },

    #[error("query {query_id}: duplicate document {doc_id}")]
    DuplicateDocument { query_id: String, doc_id: String },

    #[error("query {0} has no candidates")]
    EmptyQuery(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
