use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: &'static str, message: String },
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("{context}: {source}")]
    Core {
        context: &'static str,
        #[source]
        source: binet::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn validation(field: &'static str, message: String) -> Self {
        CliError::Validation { field, message }
    }

    /// Exit status: 2 for bad input, 1 for failed physics or verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation { .. } | CliError::Missing(_) => 2,
            _ => 1,
        }
    }
}

pub trait Context<T> {
    fn context(self, context: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, binet::Error> {
    fn context(self, context: &'static str) -> Result<T, CliError> {
        self.map_err(|source| match source {
            binet::Error::Param { name, value } => CliError::validation(name, format!("{value} is out of range")),
            source => CliError::Core { context, source },
        })
    }
}
