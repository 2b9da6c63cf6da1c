//! Experiment harness: seeded multi-run training with CSV logs, attention
//! analysis dumps and rollout traces.

pub mod config;
pub mod dump;
pub mod envs;
pub mod run;
pub mod trace;

pub use config::{AlgorithmKind, EnvKind, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("checkpoint incompatible with environment: {0}")]
    Incompatible(String),
    #[error("worker failed: {0}")]
    Worker(String),
    #[error(transparent)]
    Core(#[from] marl_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
