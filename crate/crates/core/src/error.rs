use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("eigensolver failed: {0}")]
    EigenFailed(String),

    #[error("SVD failed: {0}")]
    SvdFailed(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("SLD is ill-defined: derivative element {element:.3e} on a null eigenvalue pair; regularize with mix_with_identity")]
    IllDefinedSld { element: f64 },

    #[error("iteration limit {max_iter} reached with residual {residual:.3e}")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error("system too large for dense conversion: N={n} (limit {limit})")]
    TooLargeForDense { n: usize, limit: usize },

    #[error("bound validity condition violated: {0}")]
    BoundValidity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
}
