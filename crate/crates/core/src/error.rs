use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    Convergence { last_estimate: f64, iterations: usize },

    #[error("training diverged at iteration {iteration} (last finite risk {last_finite_risk})")]
    TrainingDiverged { iteration: usize, last_finite_risk: f64 },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no acceptable sample after {tries} tries")]
    RetryExhausted { tries: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
