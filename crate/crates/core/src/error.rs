use std::path::PathBuf;

/// Errors produced by the estimators, policies and experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("importance weights sum to zero (or less); no estimate can be formed")]
    ZeroWeightSum,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "degenerate quadrature: the constant function lies in the span of the control variates \
         (weighted residual mass {residual_mass:.3e}); reduce the number of control variates"
    )]
    DegenerateQuadrature { residual_mass: f64 },

    #[error("scale matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("prior covariance is singular (Cholesky factorization failed)")]
    SingularPrior,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dataset {0} contains no rows")]
    EmptyDataset(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{failed} of {total} replications failed, above the allowed 10%")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
