use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Model-set file could not be read or did not match the schema.
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    /// A loaded value violated a declared invariant.
    #[error("validation error for `{key}`: {message}")]
    Validation { key: String, message: String },

    /// An input fell outside an operation's declared precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A metric was requested on an empty observation set.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// The integrator produced a non-finite state.
    #[error("integration diverged at t = {time} s")]
    IntegrationDiverged { time: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn validation(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: msg.into(),
        }
    }
}
