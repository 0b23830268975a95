//! Config-driven experiments: one TOML file describes one run, the runner
//! writes CSV artifacts plus `summary.toml` into the output directory.

mod build;
mod config;
mod run;

pub use build::validate_experiment;
pub use config::*;
pub use run::{
    resolve_initial_state, run_config, run_experiment, validate_config, ManifestEntry, RunOverrides, RunSummary, SegmentLine,
};

use thiserror::Error;

/// Process exit codes of the command-line runner.
pub mod exit_code {
    pub const OK: i32 = 0;
    /// Command-line usage error (reported by the argument parser).
    pub const USAGE: i32 = 2;
    pub const CONFIG_PARSE: i32 = 3;
    pub const CONFIG_INVALID: i32 = 4;
    pub const IO: i32 = 5;
    pub const NUMERICAL: i32 = 6;
    /// A closed-loop run ended abnormally and the config asked to fail on it.
    pub const ABNORMAL_TERMINATION: i32 = 7;
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Parse(_) => exit_code::CONFIG_PARSE,
            ExperimentError::Invalid(_) => exit_code::CONFIG_INVALID,
            ExperimentError::Io(_) => exit_code::IO,
            ExperimentError::Numerical(_) => exit_code::NUMERICAL,
        }
    }
}

#[cfg(test)]
mod tests;
