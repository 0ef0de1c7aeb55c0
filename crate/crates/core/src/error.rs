use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{field} {reason}")]
    Param { field: String, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("stability constraint violated: {0}")]
    Cfl(String),
    #[error("series truncation bound {bound:.3e} exceeds tolerance {tol:.3e} at level {lmax}")]
    SeriesTruncation { bound: f64, tol: f64, lmax: usize },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(field: &str, reason: &str) -> Self {
        Error::Param {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
