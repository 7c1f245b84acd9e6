//! Shared error type. Verification outcomes are not errors: checks return
//! report structs and leave pass/fail policy to the caller. `Error` covers
//! inputs the library cannot act on at all.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("capacity exceeded: {needed} cells requested, limit {limit}")]
    Capacity { needed: u128, limit: u128 },

    #[error("invalid probability vector: {0}")]
    Probability(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("basis convention violated: {0}")]
    Convention(String),

    #[error("division impossible in this scalar backend: {0}")]
    Division(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
