use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("{solver} did not converge within {cap} iterations{detail}")]
    NoConvergence {
        solver: &'static str,
        cap: usize,
        detail: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("{rows} rows exceed the dense spectral cap of {cap}; subsample the data first")]
    TooManyRows { rows: usize, cap: usize },

    #[error("need ≥2 clusters, found {0}")]
    TooFewClusters(usize),

    #[error("no cluster has members from the original data")]
    AllClustersEmpty,
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
