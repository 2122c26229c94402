use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] prior_distill::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
    #[error("{0}")]
    Config(String),
    /// Carries the report that would have been printed on success.
    #[error("gradient check failed")]
    GradcheckFailed(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use prior_distill::Error as E;
        match self {
            CliError::GradcheckFailed(_) => 1,
            CliError::Io { .. } | CliError::Malformed { .. } => 3,
            CliError::Core(E::IoFailure(_)) => 3,
            CliError::Core(_) | CliError::Config(_) => 4,
        }
    }
}
