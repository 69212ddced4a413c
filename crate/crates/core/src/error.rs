use thiserror::Error;

/// Errors raised by scheme construction, statistics and the test engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty scheme: {0}")]
    EmptyScheme(String),

    /// The observed assignment is not a member of the declared scheme.
    #[error("design violation: {0}")]
    DesignViolation(String),

    /// A transformation set handed to the safe group test is not a group.
    #[error("group structure violation: {0}")]
    GroupViolation(String),

    /// Full enumeration was requested for a scheme or group that is too large.
    #[error("enumeration infeasible: {0}; use Monte Carlo p-values instead")]
    InfeasibleEnumeration(String),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
