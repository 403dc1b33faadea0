//! Experiment runner for the symindex laboratory: configuration, named
//! pipelines and report emission.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigFile, ExperimentConfig, Overrides, Verb};
pub use experiments::run_experiment;
pub use report::Report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] symindex::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Usage problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(symindex::Error::Input(_)) => 2,
            _ => 1,
        }
    }
}
