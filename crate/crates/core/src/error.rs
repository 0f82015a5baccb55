use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coefficient a(t) = {value} at t = {time} is below the floor a0 = {floor}")]
    PositivityViolation { time: f64, value: f64, floor: f64 },

    #[error("potential hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("inverse iteration did not converge for mode {mode} (residual {residual:.3e})")]
    NumericFailure { mode: usize, residual: f64 },

    #[error("spectrum: {0}")]
    Spectrum(String),

    #[error("basis mismatch: coefficients belong to {found}, expected {expected}")]
    BasisMismatch { expected: String, found: String },

    #[error("at epsilon = {epsilon}: {source}")]
    AtEpsilon {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_epsilon(self, epsilon: f64) -> Self {
        Error::AtEpsilon {
            epsilon,
            source: Box::new(self),
        }
    }

    /// Strips any `AtEpsilon` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEpsilon { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
