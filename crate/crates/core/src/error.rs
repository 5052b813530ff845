use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A post-selection kept a branch that carries no probability.
    #[error("degenerate post-selection on {0}: kept branch has zero mass")]
    DegeneratePostSelection(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("no perfect matching exists: {0}")]
    NoPerfectMatching(String),
    /// Decoder output failed to return the lattice to the codespace.
    #[error("correction leaves residual syndrome on {0} stabilizer(s)")]
    ResidualSyndrome(usize),
    #[error("quantile {0} outside the sampled range")]
    QuantileOutOfRange(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
