use thiserror::Error;

/// Failures mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(parashape::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<parashape::Error> for CliError {
    fn from(e: parashape::Error) -> Self {
        match e {
            parashape::Error::InvalidParameter(msg) => CliError::Config(msg),
            parashape::Error::OutsideRegion => CliError::Config("start point lies outside the region".into()),
            other => CliError::Numerical(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
