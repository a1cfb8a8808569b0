use thiserror::Error;

/// Errors raised by the estimation, sampling and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e} at or below tolerance {tolerance:e})")]
    NotPositiveDefinite { eigenvalue: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient degrees of freedom: n = {n} but p = {p}")]
    InsufficientDof { n: usize, p: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid block partition: {0}")]
    InvalidPartition(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("matrix is not orthogonal (max deviation {0:e})")]
    NotOrthogonal(f64),

    #[error("exact moments unavailable for dof {dof}: {reason}")]
    ParityUnsupported { dof: usize, reason: &'static str },

    #[error("singular linear system (residual {0:e})")]
    SingularSystem(f64),

    #[error("coefficient c[{index}] = {value} is not positive")]
    NegativeCoefficient { index: usize, value: f64 },

    #[error("context mismatch: {0}")]
    ContextMismatch(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("inconsistent dimension at row {row}: expected {expected} features, found {found}")]
    InconsistentDim {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("scatter matrix of group '{0}' is singular")]
    SingularScatter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical kind (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularSystem(_)
                | Error::NegativeCoefficient { .. }
                | Error::SingularScatter(_)
                | Error::NotOrthogonal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
