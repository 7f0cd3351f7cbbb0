use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset `{source_id}`: {reason}")]
    InvalidDataset { source_id: String, reason: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cluster count k = {k} exceeds the number of sources H = {h}")]
    TooManyClusters { k: usize, h: usize },

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("brute-force enumeration needs {count} partitions (limit {limit})")]
    OracleTooLarge { count: u128, limit: u128 },

    #[error("family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("sampler did not converge: {0}")]
    NonConvergence(crate::synthesis::SamplerDiagnostics),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
