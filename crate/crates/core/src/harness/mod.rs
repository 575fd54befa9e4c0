//! Experiment orchestration: configuration, seeds, the per-cell pipeline
//! and sweeps with CSV output.

pub mod config;
pub mod experiment;
pub mod seeds;

use std::path::Path;

use thiserror::Error;

use crate::equilibrium::EquilibriumError;
use crate::evaluation::EvaluationError;

pub use config::{
    config_to_toml, load_config, parse_config, save_config, validate_config, ConfigError, ExperimentConfig, Mode,
};
pub use experiment::{
    aggregate, cell_summaries, evaluate_cell, out_of_sample_scenarios, producer_datasets, run_experiment, run_experiment_with,
    run_single, ExperimentOutput, ExperimentRow, ProducerOutcome, SizeAggregate, Spread,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
