//! Pipeline commands behind the `ctpe` executable.

pub mod commands;
pub mod experiment;
pub mod manifest;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::*;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ctpe::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: configuration, data or internal failure.
    pub fn exit_code(&self) -> i32 {
        use ctpe::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                E::Config(_) | E::SequenceTooShort { .. } => EXIT_CONFIG,
                E::TraceMismatch | E::ShapeMismatch(_) => EXIT_INTERNAL,
                _ => EXIT_DATA,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
