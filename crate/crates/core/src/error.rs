use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad arguments: ordering violated, dimension mismatch, out-of-range parameter.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{what}: requested {requested} exceeds cap {cap}")]
    Budget { what: &'static str, requested: usize, cap: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no convergence: {0}")]
    Convergence(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
