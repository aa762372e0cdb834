use convexiv_core::Error as CoreError;

use crate::io::IoError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const BOOTSTRAP: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Core(e) => Some(e),
            CliError::Io(IoError::Shape(e)) => Some(e),
            _ => None,
        };
        match core {
            Some(e) if matches!(e.root(), CoreError::BootstrapFailures { .. }) => exit::BOOTSTRAP,
            Some(e) if e.is_numerical() => exit::NUMERICAL,
            _ => exit::INPUT,
        }
    }

    /// Short machine-readable category for the error line.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::BOOTSTRAP => "bootstrap",
            exit::NUMERICAL => "numerical",
            _ => "input",
        }
    }
}
