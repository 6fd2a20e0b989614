//! Experiment harness: configuration, the training runner for the three
//! algorithm variants, report emission, and the command-line interface.

pub mod cli;
pub mod config;
pub mod report;
pub mod run;

pub use config::{Algorithm, ExperimentConfig};
pub use report::emit_report;
pub use run::{
    compute_convergence, greedy_rollout, run_experiment, run_experiment_traced,
    run_experiment_with_network, substream, EpochMetrics, RunReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Replay(#[from] crate::replay::ReplayError),
    #[error(transparent)]
    QNet(#[from] crate::qnet::QNetError),
    #[error(transparent)]
    Elastic(#[from] crate::elastic::ElasticError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
}
