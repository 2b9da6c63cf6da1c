//! Experiment configuration: a flat TOML table whose defaults live in
//! [`ExperimentConfig::default`] and nowhere else.

use std::path::{Path, PathBuf};

use marl_core::particle::{ParticleConfig, ParticleTask};
use marl_core::routing::RoutingConfig;
use marl_core::train::{Algorithm, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

/// Relative output directories are resolved against this variable when set.
pub const OUTPUT_ROOT_VAR: &str = "MARL_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    RoutingSmall,
    RoutingLarge,
    CoopNav,
    PredatorPrey,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::RoutingSmall => "routing_small",
            EnvKind::RoutingLarge => "routing_large",
            EnvKind::CoopNav => "coop_nav",
            EnvKind::PredatorPrey => "predator_prey",
        }
    }

    pub fn is_routing(self) -> bool {
        matches!(self, EnvKind::RoutingSmall | EnvKind::RoutingLarge)
    }

    pub fn particle_task(self) -> Option<ParticleTask> {
        match self {
            EnvKind::CoopNav => Some(ParticleTask::CooperativeNavigation),
            EnvKind::PredatorPrey => Some(ParticleTask::PredatorPrey),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        toml::Value::String(s.into())
            .try_into()
            .map_err(|_| HarnessError::Config(format!("env: unknown environment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    AttMaddpg,
    Maddpg,
    Khead,
    Ddpg,
    Wcmp,
    Greedy,
}

impl AlgorithmKind {
    pub fn learner(self) -> Option<Algorithm> {
        match self {
            AlgorithmKind::AttMaddpg => Some(Algorithm::AttMaddpg),
            AlgorithmKind::Maddpg => Some(Algorithm::Maddpg),
            AlgorithmKind::Khead => Some(Algorithm::Khead),
            AlgorithmKind::Ddpg => Some(Algorithm::Ddpg),
            AlgorithmKind::Wcmp | AlgorithmKind::Greedy => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Wcmp => "wcmp",
            AlgorithmKind::Greedy => "greedy",
            other => other.learner().expect("learner").name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub algorithm: AlgorithmKind,
    /// Number of Q-value heads.
    pub k: usize,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    /// Steps per episode; 0 picks the environment default (50 routing, 25 particle).
    pub horizon: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub mlp_critic_hidden: Vec<usize>,
    pub warmup: usize,
    pub noise_start: f64,
    pub noise_end: f64,
    pub noise_anneal_fraction: f64,
    pub demand_noise: f64,
    pub exploration_bonus: f64,
    pub output_dir: PathBuf,
    pub save_checkpoint: bool,
    pub save_replay: bool,
    /// Run seeds in separate worker processes.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::RoutingSmall,
            algorithm: AlgorithmKind::AttMaddpg,
            k: 4,
            seeds: vec![1, 2, 3, 4, 5],
            episodes: 300,
            horizon: 0,
            actor_lr: 0.001,
            critic_lr: 0.01,
            tau: 0.001,
            gamma: 0.95,
            buffer_capacity: 100_000,
            batch_size: 128,
            hidden_width: 32,
            mlp_critic_hidden: vec![64, 64],
            warmup: 1024,
            noise_start: 0.3,
            noise_end: 0.05,
            noise_anneal_fraction: 0.5,
            demand_noise: 0.2,
            exploration_bonus: 0.0,
            output_dir: PathBuf::from("results"),
            save_checkpoint: false,
            save_replay: false,
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(HarnessError::Config(format!("{field}: {msg}")));
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds", "seeds must be distinct");
        }
        if self.episodes == 0 {
            return bad("episodes", "must be >= 1");
        }
        if self.hidden_width == 0 {
            return bad("hidden_width", "must be >= 1");
        }
        if !(0.0..1.0).contains(&self.demand_noise) {
            return bad("demand_noise", "must lie in [0, 1)");
        }
        if self.exploration_bonus < 0.0 {
            return bad("exploration_bonus", "must be >= 0");
        }
        match self.algorithm {
            AlgorithmKind::Wcmp if !self.env.is_routing() => {
                return bad("algorithm", "wcmp only applies to the routing environments");
            }
            AlgorithmKind::Greedy if self.env.is_routing() => {
                return bad("algorithm", "greedy only applies to the particle environments");
            }
            _ => {}
        }
        if self.algorithm.learner().is_some() {
            self.train_config()?.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Trainer settings; errors for the rule-based baselines.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let algorithm = self
            .algorithm
            .learner()
            .ok_or_else(|| HarnessError::Unsupported(format!("{} is not a learning algorithm", self.algorithm.name())))?;
        Ok(TrainConfig {
            algorithm,
            k: self.k,
            actor_hidden: vec![self.hidden_width, self.hidden_width],
            critic_width: self.hidden_width,
            mlp_critic_hidden: self.mlp_critic_hidden.clone(),
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            tau: self.tau,
            gamma: self.gamma,
            buffer_capacity: self.buffer_capacity,
            batch_size: self.batch_size,
            warmup: self.warmup,
            noise_start: self.noise_start,
            noise_end: self.noise_end,
            noise_anneal_fraction: self.noise_anneal_fraction,
            episodes: self.episodes,
        })
    }

    pub fn routing_config(&self) -> RoutingConfig {
        let d = RoutingConfig::default();
        RoutingConfig {
            horizon: if self.horizon == 0 { d.horizon } else { self.horizon },
            demand_noise: self.demand_noise,
            exploration_bonus: self.exploration_bonus,
        }
    }

    pub fn particle_config(&self) -> ParticleConfig {
        let d = ParticleConfig::default();
        ParticleConfig {
            horizon: if self.horizon == 0 { d.horizon } else { self.horizon },
            ..d
        }
    }

    /// The output directory after applying [`OUTPUT_ROOT_VAR`].
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
