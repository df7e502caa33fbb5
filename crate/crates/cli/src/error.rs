use std::path::Path;

use thiserror::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_MODEL: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("invalid model {path}: {message}")]
    Model { path: String, message: String },
    #[error("{0}")]
    Infeasible(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] seqrisk::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use seqrisk::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Model { .. } => EXIT_MODEL,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::InvalidModel(_) | E::InvalidToken { .. } | E::DegenerateHazard { .. } => EXIT_MODEL,
                E::CalibrationFailure { .. } | E::InstanceTooLarge { .. } | E::UndefinedMetric(_) => EXIT_INFEASIBLE,
                E::Io(_) | E::Csv(_) => EXIT_IO,
                E::InvalidArgument(_) | E::ModeMismatch { .. } | E::Json(_) => EXIT_CONFIG,
            },
        }
    }
}
