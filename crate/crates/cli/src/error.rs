use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
            CliError::Io(_) | CliError::Other(_) => ExitCode::FAILURE,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<dmft_sgd::Error> for CliError {
    fn from(e: dmft_sgd::Error) -> Self {
        use dmft_sgd::Error as E;
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        match e {
            E::InvalidInput(_) | E::UnsupportedModel(_) => CliError::Config(e.to_string()),
            E::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}
