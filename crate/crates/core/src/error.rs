use thiserror::Error;

/// Errors raised by the channel, estimation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("kernel matrix is ill-conditioned: Cholesky failed after jitter {jitter:e}")]
    IllConditioned { jitter: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("posterior variance {value:e} below tolerance {tolerance:e}")]
    NegativeVariance { value: f64, tolerance: f64 },

    #[error("grid entry ({row}, {col}) is neither observed nor predicted")]
    CoverageGap { row: usize, col: usize },

    #[error("hyperparameter {0} is not defined for this kernel family")]
    UnsupportedHyperparameter(&'static str),

    #[error("optimizer produced no finite objective in {restarts} restart(s)")]
    OptimizationFailed { restarts: usize },

    #[error("not enough samples: need at least {needed}, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("missing result series: {0}")]
    MissingSeries(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
