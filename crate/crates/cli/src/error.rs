use std::path::Path;

/// Errors surfaced by the harness, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
            CliError::Failed(_) => 1,
        }
    }

    pub fn validation(field: &str, e: icode::Error) -> Self {
        CliError::Validation(format!("{field}: {e}"))
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<icode::Error> for CliError {
    fn from(e: icode::Error) -> Self {
        use icode::Error as E;
        match e {
            E::Divergence { .. } | E::NonFinite(_) => CliError::Divergence(e.to_string()),
            E::Io(_) | E::Json(_) | E::Format(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
