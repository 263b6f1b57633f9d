use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("no sensed channels: the assignment leaves every channel without a sensing SU")]
    NoSensedChannels,

    #[error("search space too large: {what} needs {needed} candidates, limit is {limit}")]
    TooLarge {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
