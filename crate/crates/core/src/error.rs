//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precision: {0}")]
    Precision(String),
    #[error("infeasible scale: {0}")]
    InfeasibleScale(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("aliasing: {0}")]
    Aliasing(String),
    #[error("nonpositive ceiling: {0}")]
    NonpositiveCeiling(String),
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
