use thiserror::Error;

/// Errors raised by model construction, filtering, estimation and backtesting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("duplicate eigenvalue: {kind}[{i}] and {kind}[{j}] coincide ({value})")]
    DuplicateEigenvalue {
        kind: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("log-volatility overflow at t={t}: ln h = {value}")]
    Overflow { t: usize, value: f64 },

    #[error("residual column {0} is identically zero in the correlation window")]
    DegenerateColumn(usize),

    #[error("non-finite likelihood contribution at t={t}")]
    NonFinite { t: usize },

    #[error("estimation did not converge: {0}")]
    NoConvergence(String),

    #[error("information matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularInformation { min_eigenvalue: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("explosive path at t={t}: ln h = {value}")]
    ExplosivePath { t: usize, value: f64 },

    #[error("covariance matrix is not positive definite")]
    SingularH,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
