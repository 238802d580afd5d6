use thiserror::Error;

/// Failure classes of a command, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<nakagami::Error> for CliError {
    fn from(e: nakagami::Error) -> Self {
        use nakagami::Error as E;
        match e {
            E::Io(_) | E::Format(_) => CliError::Io(e.to_string()),
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            E::Config(msg) => CliError::Config(msg),
            E::Domain(_) | E::DegenerateWindow(_) | E::SingularPixel { .. } | E::Evaluation(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}
