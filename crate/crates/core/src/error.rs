use thiserror::Error;

/// Errors raised across the simulator and the analytic toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Array or matrix shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical procedure did not reach the requested accuracy.
    #[error("accuracy error: {message} (best estimate {best_estimate:e})")]
    Accuracy { message: String, best_estimate: f64 },

    /// A closed-form expression is used outside its region of validity.
    #[error("validity error: {0}")]
    Validity(String),

    /// A code or plan could not be constructed.
    #[error("construction error: {0}")]
    Construction(String),

    /// Internal failure of an iterative algorithm.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
