use std::fmt;
use std::path::Path;

use qblp::ErrorClass;

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
            CliError::Numerical(m) => ("numerical", m),
        };
        // one line per failure
        write!(f, "{kind} error: {}", msg.replace('\n', "; "))
    }
}

impl From<qblp::Error> for CliError {
    fn from(e: qblp::Error) -> Self {
        let msg = e.to_string();
        match e.class() {
            ErrorClass::Usage => CliError::Usage(msg),
            ErrorClass::Data => CliError::Data(msg),
            ErrorClass::Numerical => CliError::Numerical(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
