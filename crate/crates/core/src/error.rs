use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cholesky factorization failed at leading minor {minor} (pivot {pivot:e})")]
    Factorization { minor: usize, pivot: f64 },

    #[error("circulant embedding has negative eigenvalue {min_eigenvalue:e} (enable clamp-eigenvalues to truncate)")]
    NegativeEigenvalue { min_eigenvalue: f64 },

    #[error("index {index} out of range for path with {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no samples survived the slab constraint (D = {width}, {replicas} replicas); use a larger D or more replicas")]
    NoSurvivors { width: f64, replicas: usize },

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
