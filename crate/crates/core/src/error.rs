use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("residual scale collapsed below {threshold:e} (perfect fit)")]
    DegenerateResidual { threshold: f64 },

    #[error("design matrix is identically zero")]
    AllZeroDesign,

    #[error("selected design is numerically singular (condition number {condition:e})")]
    SingularDesign { condition: f64 },

    #[error("coordinate {0} has no instrument signal (fitted column is zero)")]
    NoInstrumentSignal(usize),

    #[error("residual variance is degenerate ({0:e})")]
    DegenerateVariance(f64),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("covariance not positive definite after {attempts} attempts")]
    NotPositiveDefinite { attempts: usize },

    #[error("first-stage column {column}: {source}")]
    FirstStageColumn {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("response has zero variance")]
    ZeroVarianceResponse,
}
