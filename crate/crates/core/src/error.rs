use thiserror::Error;

/// Errors produced by the numerical modules.
#[derive(Error, Debug)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter condition required by the requested regime does not hold.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A check was refused because its hypotheses are not met.
    #[error("refused: {0}")]
    Refused(String),

    /// The requested resolution cannot represent the problem; carries a suggestion.
    #[error("refinement needed: {0}")]
    Refinement(String),

    /// Fixed-point iteration failed to contract within the configured horizon.
    #[error("horizon too long: {0}")]
    HorizonTooLong(String),

    /// A numerical invariant (mass, finiteness) was violated during a run.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
