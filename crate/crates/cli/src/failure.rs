//! Failure classes and their process exit codes.

use std::fmt::Display;

use thiserror::Error;

/// A command failure. The variant decides the exit status:
/// usage 1, data 2, numeric 3.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0:#}")]
    Usage(anyhow::Error),
    #[error("{0:#}")]
    Data(anyhow::Error),
    #[error("{0:#}")]
    Numeric(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    pub fn usage(message: impl Display + std::fmt::Debug + Send + Sync + 'static) -> Self {
        Failure::Usage(anyhow::Error::msg(message))
    }

    pub fn data(message: impl Display + std::fmt::Debug + Send + Sync + 'static) -> Self {
        Failure::Data(anyhow::Error::msg(message))
    }
}

/// Attaches a failure class and context to any displayable error.
pub trait Classify<T> {
    fn usage_err(self, context: impl FnOnce() -> String) -> Result<T, Failure>;
    fn data_err(self, context: impl FnOnce() -> String) -> Result<T, Failure>;
    fn numeric_err(self, context: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Display> Classify<T> for Result<T, E> {
    fn usage_err(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(anyhow::anyhow!("{}: {e}", context())))
    }

    fn data_err(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(anyhow::anyhow!("{}: {e}", context())))
    }

    fn numeric_err(self, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::Numeric(anyhow::anyhow!("{}: {e}", context())))
    }
}
