use std::path::PathBuf;

use laser_linewidth::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io { .. } | CliError::Read { .. } => 4,
            CliError::Core(e) => match e {
                Error::InvalidParameter { .. }
                | Error::SizeGuard { .. }
                | Error::Domain(_)
                | Error::MissingField(_)
                | Error::ModelMismatch { .. } => 2,
                Error::Truncation { .. }
                | Error::DegenerateInput(_)
                | Error::Convergence(_)
                | Error::Stiffness { .. }
                | Error::Grid(_)
                | Error::NonTermination(_)
                | Error::InsufficientData(_) => 3,
            },
        }
    }

    /// Message naming the offending flag where there is one.
    pub fn message(&self) -> String {
        match self {
            CliError::Core(Error::InvalidParameter { name, reason }) => {
                format!("invalid value for --{}: {reason}", name.replace('_', "-"))
            }
            CliError::Core(e @ Error::SizeGuard { .. }) => format!("--nmax: {e}"),
            CliError::Core(e @ Error::MissingField(_)) => {
                format!("{e}; supply it as a flag or in --input")
            }
            other => other.to_string(),
        }
    }
}
