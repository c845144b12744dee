//! CLI error type carrying the exit-code category.

use gfa_core::Error as CoreError;

/// Exit-code categories: 0 success, then one distinct code per failure
/// class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config,
    Io,
    Numerical,
    Dependency,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Config => 2,
            ExitKind::Io => 3,
            ExitKind::Numerical => 4,
            ExitKind::Dependency => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }

    pub fn dependency(message: impl Into<String>) -> Self {
        CliError::new(ExitKind::Dependency, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError::new(ExitKind::Io, message)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::InvalidArgument(_) | CoreError::ShapeMismatch(_) => ExitKind::Config,
            CoreError::Io(_) | CoreError::Csv(_) | CoreError::Json(_) | CoreError::Parse(_) => {
                ExitKind::Io
            }
            CoreError::Alignment(_) => ExitKind::Io,
            CoreError::NumericalFailure(_)
            | CoreError::AdaptationFailure(_)
            | CoreError::RunFailure(_)
            | CoreError::Degenerate(_)
            | CoreError::Collinearity(_) => ExitKind::Numerical,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ExitKind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new(ExitKind::Io, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::new(ExitKind::Io, e.to_string())
    }
}
