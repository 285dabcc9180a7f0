//! Configuration, staged pipeline and reporting behind the `msstokes` binary.

pub mod config;
pub mod pipeline;

pub use config::{Overrides, RunConfig};
pub use pipeline::{cmd_report, Session, Stage};

/// Failures of a command, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mesh error: {0}")]
    Mesh(msstokes_core::Error),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("solver error: {0}")]
    Solver(msstokes_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<msstokes_core::Error> for CliError {
    fn from(e: msstokes_core::Error) -> Self {
        match e {
            msstokes_core::Error::Io(io) => CliError::Io(io),
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Json(_) => 1,
            CliError::Mesh(_) => 2,
            CliError::MissingPrerequisite(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}
