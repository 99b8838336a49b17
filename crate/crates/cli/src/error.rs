use std::fmt;

/// Failure classes with distinct process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Collapse(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Collapse(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Collapse(_) => Some("increase pretrain epochs or o"),
            _ => None,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Collapse(m) => write!(f, "training failed: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<dg_core::Error> for CliError {
    fn from(e: dg_core::Error) -> Self {
        use dg_core::Error as E;
        if e.is_training_collapse() {
            return CliError::Collapse(e.to_string());
        }
        match e {
            E::Io { .. } | E::BadMagic { .. } | E::Truncated { .. } | E::CountMismatch { .. } | E::Checkpoint(_) => {
                CliError::Io(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = Result<T, CliError>;
