//! Harness failures split by exit code: configuration problems exit with 2,
//! data problems (parsing, missing files, diverged runs) with 3.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hccr_core::Error> for CliError {
    fn from(e: hccr_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}
