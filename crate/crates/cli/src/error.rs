use thiserror::Error;

/// Failures mapped onto the process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Exit code 1.
    #[error("verification failed: {0}")]
    Verification(String),
    /// Exit code 1.
    #[error(transparent)]
    Run(#[from] vispinn_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
