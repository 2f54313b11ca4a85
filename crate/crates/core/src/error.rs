use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// Evaluation requested exactly at a pole of the model.
    #[error("singular point: {0}")]
    Singularity(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    Input(String),
    /// Geometry too degenerate for the requested fit.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("fit rejected: {0}")]
    Fit(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        Error::Singularity(msg.into())
    }
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
