use std::io;
use std::path::PathBuf;

/// Failure of a subcommand, grouped by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(dbb_core::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub const EXIT_OUTPUT: i32 = 1;
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_NUMERIC: i32 = 3;
    pub const EXIT_VERIFICATION: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Numeric(_) => Self::EXIT_NUMERIC,
            CliError::Verification(_) => Self::EXIT_VERIFICATION,
            CliError::Io { .. } | CliError::Output(_) => Self::EXIT_OUTPUT,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<dbb_core::Error> for CliError {
    fn from(e: dbb_core::Error) -> Self {
        use dbb_core::Error as E;
        match e {
            E::InvalidParams(_) | E::Config(_) | E::ZeroSpinor | E::RadiusOutOfDomain { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
