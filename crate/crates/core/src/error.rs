use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A Cholesky pivot was not strictly positive.
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A forward or backward value was NaN or infinite.
    #[error("non-finite value produced at {0}")]
    NonFiniteValue(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("data map too small for any complete window: {0}")]
    MapTooSmall(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Training loss stayed non-finite or above the divergence ceiling.
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    DivergenceDetected { iteration: u64, loss: f64 },

    /// An estimator failed on one element of a dataset.
    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at(index: usize, source: Error) -> Self {
        Error::AtIndex { index, source: Box::new(source) }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }

    /// Strips any `AtIndex` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIndex { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
