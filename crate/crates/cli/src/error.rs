use std::path::PathBuf;

use hybrid_epr_core::Error as CoreError;

/// Failure of a CLI command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: unreadable or malformed scenario, out-of-range values.
    #[error("invalid scenario: {0}")]
    Validation(String),
    /// The computation itself failed (integration, singular conditioning).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Attach `context` (usually the scenario key involved) to a core error.
    pub fn core(context: &str, err: CoreError) -> Self {
        let msg = format!("{context}: {err}");
        match err {
            CoreError::InvalidState { .. }
            | CoreError::InvalidChannel { .. }
            | CoreError::DegenerateMeasurement { .. }
            | CoreError::ConvergenceFailure { .. } => CliError::Numerical(msg),
            _ => CliError::Validation(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Adds `.ctx("key")` to core results.
pub trait Context<T> {
    fn ctx(self, context: &str) -> CliResult<T>;
}

impl<T> Context<T> for Result<T, CoreError> {
    fn ctx(self, context: &str) -> CliResult<T> {
        self.map_err(|e| CliError::core(context, e))
    }
}
