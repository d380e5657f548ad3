use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed argument (dimension mismatch, non-finite data, invalid range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects that must share a tensor shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The Jacobian is numerically rank-deficient; the Gauss-Newton step is
    /// meaningless and the condition number is effectively infinite.
    #[error("ill-conditioned jacobian: sigma_min = {sigma_min:.6e} <= tolerance {tolerance:.6e}")]
    IllConditionedJacobian { sigma_min: f64, tolerance: f64 },

    /// The rank-1 retraction did not converge or hit a singular configuration.
    /// Carries the last factor iterate for post-mortem inspection.
    #[error("retraction failed on term {term}: {reason}")]
    RetractionFailed {
        term: usize,
        reason: String,
        factors: Vec<Vec<f64>>,
    },

    /// A fit or estimate was requested with too few data points.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A data file could not be parsed.
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
