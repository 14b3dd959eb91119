use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub const EXIT_INTERNAL: u8 = 1;
    pub const EXIT_CONFIG: u8 = 2;
    pub const EXIT_INFEASIBLE: u8 = 3;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Infeasible(_) => Self::EXIT_INFEASIBLE,
            CliError::Internal(_) => Self::EXIT_INTERNAL,
        }
    }
}

pub(crate) fn internal<E>(e: E) -> CliError
where
    E: std::error::Error + Send + Sync + 'static,
{
    CliError::Internal(anyhow::Error::new(e))
}
