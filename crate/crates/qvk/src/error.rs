use std::process::ExitCode;

/// Failures of a CLI run, each mapped to its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable arguments or input files, or input the library rejects.
    #[error("{0}")]
    Parse(String),
    #[error("chain invariant violated: {0}")]
    ChainInvariant(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::ChainInvariant(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }
}

impl From<qvk_core::Error> for CliError {
    fn from(e: qvk_core::Error) -> Self {
        use qvk_core::Error as E;
        match e {
            E::NumericalFailure(_) | E::ConstructionFailed { .. } | E::InvalidStep { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.into())
        } else {
            CliError::Parse(format!("malformed JSON: {e}"))
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
