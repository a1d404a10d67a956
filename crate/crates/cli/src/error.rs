use gsar::GsarError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// Malformed or inconsistent input data.
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Model(#[from] GsarError),
}

impl CliError {
    /// 2 for bad invocations or bad input, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Io(_) => 1,
            CliError::Model(e) => match e {
                GsarError::InvalidInput(_)
                | GsarError::DimensionMismatch(_)
                | GsarError::Parse { .. }
                | GsarError::IndexOutOfBounds { .. }
                | GsarError::Validation(_)
                | GsarError::UnsupportedLink { .. }
                | GsarError::MeanDomain { .. } => 2,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
