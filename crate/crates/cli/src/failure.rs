use std::fmt;
use std::process::ExitCode;

use qgw::Error;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

// Malformed file contents count as invalid input; only failures of the
// operating system to read or write are I/O errors.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Io(e.to_string()),
            Error::Numerical(_) => Failure::Numerical(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Attaches a file path to I/O failures.
pub trait AtPath<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T> AtPath<T> for Result<T, Error> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| match e {
            Error::Io(io) => Failure::Io(format!("{}: {io}", path.display())),
            other => other.into(),
        })
    }
}

impl<T> AtPath<T> for std::io::Result<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|io| Failure::Io(format!("{}: {io}", path.display())))
    }
}
