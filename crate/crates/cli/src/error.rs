use hadanet_train::TrainError;
use thiserror::Error;

/// A failed command. Rendered on stderr as one line, `error[<kind>]: <message>`.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, arguments or configuration. Exit code 2.
    #[error("error[usage]: {0}")]
    Usage(String),
    /// An oracle or tolerance check failed. Exit code 1.
    #[error("error[check]: {0}")]
    Check(String),
    /// Unreadable, unwritable or malformed files. Exit code 3.
    #[error("error[io]: {0}")]
    Io(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Check(_) => "check",
            CliError::Io(_) => "io",
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<hadanet::Error> for CliError {
    fn from(e: hadanet::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string().replace('\n', " ");
        match e {
            TrainError::Io { .. }
            | TrainError::WrongMagic { .. }
            | TrainError::Truncated { .. }
            | TrainError::CountMismatch { .. }
            | TrainError::LengthMismatch { .. }
            | TrainError::UnknownLayerKind(_)
            | TrainError::Manifest { .. } => CliError::Io(msg),
            _ => CliError::Usage(msg),
        }
    }
}
