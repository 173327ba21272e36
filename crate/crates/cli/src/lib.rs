//! Experiment harness for `islsim`: the experiments as library functions, CSV and
//! manifest writers, and the command-line front end.

pub mod cli;
pub mod experiments;
pub mod manifest;
pub mod output;
pub mod verify;

use islsim_core::metrics::MetricsError;
use islsim_core::mfg::MfgError;
use islsim_core::scenario::ScenarioError;
use islsim_core::solvers::SolverError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Mfg(#[from] MfgError),
    #[error("{0}")]
    Check(&'static str),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Configuration problems exit with 2, everything else with 1.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Usage(_)
                | ExperimentError::Scenario(ScenarioError::Parse { .. } | ScenarioError::Invalid(_) | ScenarioError::Io { .. })
        )
    }
}
