use std::fmt::Display;
use std::path::Path;

use wavecal::Error;

pub const VALIDATION: u8 = 2;
pub const RUNTIME: u8 = 3;
pub const IO: u8 = 4;

/// A diagnostic line and the process exit code that goes with it.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: VALIDATION,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl Display) -> Self {
        Self {
            code: IO,
            message: format!("{}: {err}", path.display()),
        }
    }

    /// Prefixes the message with the input it concerns.
    pub fn context(mut self, what: impl Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::InvalidInput(_) | Error::Parse { .. } | Error::IllConditionedWeights { .. } => VALIDATION,
            Error::ResourceLimit(_) | Error::Initialization(_) | Error::Numerical(_) => RUNTIME,
            Error::Io(_) => IO,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => IO,
            Error::Csv(_) => VALIDATION,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}
