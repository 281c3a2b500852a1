use std::fmt;
use std::path::{Path, PathBuf};

/// A command failure, classified by which exit code it maps to.
///
/// The exit-code contract is stable for scripting: 0 success, 1 input
/// error (unreadable or malformed data), 2 configuration error (invalid
/// parameters or an inconsistent config file).
#[derive(Debug)]
pub enum CliError {
    /// Bad input data. `line` is 1-based when the failure is tied to a
    /// specific line.
    Input {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    /// Bad configuration.
    Config { message: String },
}

impl CliError {
    pub fn input(path: &Path, line: Option<usize>, message: impl fmt::Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        CliError::Config {
            message: message.to_string(),
        }
    }

    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 1,
            CliError::Config { .. } => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input {
                path,
                line: Some(line),
                message,
            } => write!(f, "{}:{line}: {message}", path.display()),
            CliError::Input {
                path,
                line: None,
                message,
            } => write!(f, "{}: {message}", path.display()),
            CliError::Config { message } => write!(f, "invalid config: {message}"),
        }
    }
}

impl std::error::Error for CliError {}
