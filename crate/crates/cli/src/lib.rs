//! Configuration-driven experiment runner on top of `pinning-core`.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Core(pinning_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Maps a library error raised while validating a config.
    pub fn from_validation(e: pinning_core::Error) -> Self {
        match e {
            pinning_core::Error::Unsupported(m) => CliError::Unsupported(m),
            other => CliError::Config(other.to_string()),
        }
    }

    /// Process exit status: 2 for config errors, 3 for unsupported
    /// combinations, 1 for anything failing at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Unsupported(_) => 3,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<pinning_core::Error> for CliError {
    fn from(e: pinning_core::Error) -> Self {
        match e {
            pinning_core::Error::Unsupported(m) => CliError::Unsupported(m),
            other => CliError::Core(other),
        }
    }
}
