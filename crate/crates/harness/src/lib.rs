//! Command implementations behind the `dagcrew` binary.

pub mod config;
pub mod generate;
pub mod graph;
pub mod report;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
}

impl HarnessError {
    pub fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.to_string(),
            source,
        }
    }

    /// Process exit status: 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Usage(_) => 2,
            _ => 1,
        }
    }
}
