use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Internal,
}

#[derive(Debug, Error)]
#[error("{msg}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Usage, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Data, msg: msg.into() }
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Internal, msg: msg.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::data(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with a file name.
    pub fn context(self, path: &Path) -> Self {
        CliError { kind: self.kind, msg: format!("{}: {}", path.display(), self.msg) }
    }

    /// Process exit status: 1 usage, 2 data or format, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Internal => 3,
        }
    }
}

impl From<rann::Error> for CliError {
    fn from(e: rann::Error) -> Self {
        match e {
            rann::Error::InvalidParameter(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(format!("bad record: {e}"))
    }
}
