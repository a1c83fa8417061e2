use thiserror::Error;

/// Errors raised by model construction and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates a model or context invariant. `field` is a dotted path.
    #[error("invalid value for {field}: {msg}")]
    Config { field: String, msg: String },
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An iterative procedure did not reach its tolerance.
    #[error("no convergence: {0}")]
    Convergence(String),
    /// The requested combination is not supported by the chosen backend.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { field: field.into(), msg: msg.into() }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
