//! Building environments and policies from a configuration.

use marl_core::baselines::{GreedyPolicy, WcmpPolicy};
use marl_core::env::{ActionSpace, Environment, JointAction, JointObservation, JointPolicy, StepResult};
use marl_core::particle::{ParticleConfig, ParticleEnv};
use marl_core::routing::{RoutingConfig, RoutingEnv, Topology};

use crate::config::{AlgorithmKind, EnvKind, ExperimentConfig};
use crate::{HarnessError, Result};

/// Either environment family behind one [`Environment`] implementation.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Routing(RoutingEnv),
    Particle(ParticleEnv),
}

impl AnyEnv {
    pub fn build(kind: EnvKind, routing: RoutingConfig, particle: ParticleConfig) -> Result<Self> {
        Ok(match kind {
            EnvKind::RoutingSmall => AnyEnv::Routing(RoutingEnv::new(Topology::small(), routing)?),
            EnvKind::RoutingLarge => AnyEnv::Routing(RoutingEnv::new(Topology::large(), routing)?),
            EnvKind::CoopNav | EnvKind::PredatorPrey => {
                AnyEnv::Particle(ParticleEnv::new(kind.particle_task().expect("particle kind"), particle)?)
            }
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::build(cfg.env, cfg.routing_config(), cfg.particle_config())
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            AnyEnv::Routing(e) => e,
            AnyEnv::Particle(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnv::Routing(e) => e,
            AnyEnv::Particle(e) => e,
        }
    }
}

impl Environment for AnyEnv {
    fn n_agents(&self) -> usize {
        self.inner().n_agents()
    }

    fn observation_dims(&self) -> Vec<usize> {
        self.inner().observation_dims()
    }

    fn action_spaces(&self) -> Vec<ActionSpace> {
        self.inner().action_spaces()
    }

    fn horizon(&self) -> usize {
        self.inner().horizon()
    }

    fn reset(&mut self, seed: u64) -> JointObservation {
        self.inner_mut().reset(seed)
    }

    fn step(&mut self, action: &JointAction) -> marl_core::Result<StepResult> {
        self.inner_mut().step(action)
    }
}

/// The rule-based policy for `algorithm` on `env`.
pub fn baseline_policy(algorithm: AlgorithmKind, env: &AnyEnv) -> Result<Box<dyn JointPolicy>> {
    match (algorithm, env) {
        (AlgorithmKind::Wcmp, AnyEnv::Routing(e)) => Ok(Box::new(WcmpPolicy::new(e.layouts().to_vec()))),
        (AlgorithmKind::Greedy, AnyEnv::Particle(e)) => Ok(Box::new(GreedyPolicy {
            task: e.task(),
            v_max: e.config().v_max,
        })),
        _ => Err(HarnessError::Unsupported(format!(
            "{} has no rule-based policy for this environment",
            algorithm.name()
        ))),
    }
}
