use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input or intermediate value was NaN or infinite where a
    /// finite value is required.
    #[error("non-finite {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },

    /// A structural precondition was violated (bad dimensions, empty input,
    /// out-of-range parameter).
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// Vector or matrix dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A persisted artifact failed format or integrity validation.
    #[error("artifact format: {0}")]
    Format(String),

    /// Training produced a non-finite loss or parameter.
    #[error("training run {run_index} diverged: {detail}")]
    Diverged { run_index: usize, detail: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub fn non_finite(what: &'static str, detail: impl Into<String>) -> Self {
        Error::NonFinite {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
