//! Command errors and their process exit codes.

use fet_core::dataset::DatasetError;
use fet_core::{ForestError, MetricsError, ProtocolError};
use thiserror::Error;

/// Exit code of a successful command.
pub const EXIT_OK: i32 = 0;
/// Invalid flags, config file, or config values.
pub const EXIT_CONFIG: i32 = 2;
/// The federated session failed: handshake, lockstep, timeout, disconnect.
pub const EXIT_PROTOCOL: i32 = 3;
/// A file could not be read, parsed, or written.
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(ProtocolError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Protocol(_) => EXIT_PROTOCOL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(m) => CliError::Config(m),
            ProtocolError::Dataset(d) => d.into(),
            ProtocolError::Forest(f) => f.into(),
            ProtocolError::Ldp(l) => CliError::Config(l.to_string()),
            other => CliError::Protocol(other),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::BadFraction(_) | DatasetError::TooManyShards { .. } => CliError::Config(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Protocol(p) => p.into(),
            MetricsError::Dataset(d) => d.into(),
            MetricsError::Forest(f) => f.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}
