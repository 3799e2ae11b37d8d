use std::fmt;
use std::path::PathBuf;

/// Errors that end a command; printed as `error[code]: message`.
#[derive(Debug)]
pub enum CliError {
    Core(xmodal::Error),
    Io { path: PathBuf, source: std::io::Error },
    Json { path: PathBuf, source: serde_json::Error },
    Incompatible(String),
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "json",
            CliError::Incompatible(_) => "incompatible_reports",
            CliError::Usage(_) => "usage",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Json { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Incompatible(m) | CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<xmodal::Error> for CliError {
    fn from(e: xmodal::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
