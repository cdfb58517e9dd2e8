use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the operation's domain (bad gamma, mismatched sizes, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested mesh is larger than the memory guard allows.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Factorization or solve failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate reference solution (zero norm)")]
    DegenerateReference,

    /// A Monte Carlo estimate contradicts an inequality that must hold.
    #[error("statistical alarm: {0}")]
    StatisticalAlarm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
