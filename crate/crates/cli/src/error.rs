//! CLI failure classes mapped onto the documented exit codes.

use abstractor_core::LabError;

#[derive(Debug)]
pub enum CliError {
    /// Bad manifest, flags, or referenced files; exit 2. Raised before any
    /// output directory is created, so validation failures leave no files.
    Validation(String),
    /// Training diverged where the experiment cannot continue; exit 3.
    Aborted(String),
    /// Unexpected runtime failure (I/O and the like); exit 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Aborted(_) => 3,
            CliError::Internal(_) => 1,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation: {m}"),
            CliError::Aborted(m) => write!(f, "aborted: {m}"),
            CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Aborted(m) => CliError::Aborted(m),
            // Config and capacity errors are bad experiment descriptions;
            // format errors are bad referenced files. All user-fixable.
            LabError::Config(m) | LabError::Capacity(m) | LabError::Format(m) => {
                CliError::Validation(m)
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("i/o error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
