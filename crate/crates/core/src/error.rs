use thiserror::Error;

/// Errors raised by the library.
///
/// The variants map onto the CLI exit-code policy: configuration problems,
/// numerical failures and enumeration-budget overruns are kept distinct so a
/// sweep can tell a finding from a failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at line {line}, field `{field}`: {message}")]
    ConfigAt {
        line: usize,
        field: String,
        message: String,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("enumeration budget exceeded: {requested} words requested, budget is {budget}; lower n or N")]
    Budget { requested: u128, budget: u128 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("measure is not liftable: {0}")]
    NotLiftable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
