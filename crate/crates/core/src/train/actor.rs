//! Deterministic per-agent policies and exploration noise.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::ActionSpace;
use crate::nn::{Mlp, MlpSpec, MlpTape, OutputActivation, ParameterStore};
use crate::{Error, Result};

/// `mu_theta(o)`: an MLP whose output is squashed into the action space.
///
/// Simplex spaces use a softmax output. Box spaces must be symmetric and use
/// `high * tanh(.)`.
#[derive(Debug, Clone)]
pub struct Actor {
    net: Mlp,
    space: ActionSpace,
    scale: f64,
}

impl Actor {
    pub fn new(obs_dim: usize, hidden: Vec<usize>, space: ActionSpace) -> Result<Self> {
        let (output, scale) = match space {
            ActionSpace::Simplex { .. } => (OutputActivation::Softmax, 1.0),
            ActionSpace::Box { low, high, .. } => {
                if !(high > 0.0) || low != -high {
                    return Err(Error::Config(format!(
                        "actor box space must be symmetric around 0, got [{low}, {high}]"
                    )));
                }
                (OutputActivation::Tanh, high)
            }
        };
        let net = Mlp::new(MlpSpec::new(obs_dim, hidden, space.dim()).with_output(output), "")?;
        Ok(Self { net, space, scale })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn space(&self) -> ActionSpace {
        self.space
    }

    pub fn obs_dim(&self) -> usize {
        self.net.spec().input_dim
    }

    pub fn register<R: Rng + ?Sized>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        self.net.register(store, rng)
    }

    /// The deterministic action for one observation.
    pub fn act(&self, params: &ParameterStore, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Shape(format!(
                "actor expects an observation of length {}, got {}",
                self.obs_dim(),
                obs.len()
            )));
        }
        let mut a = self.net.forward(params, obs)?;
        if self.scale != 1.0 {
            a.iter_mut().for_each(|v| *v *= self.scale);
        }
        Ok(a)
    }

    pub fn act_batch(&self, params: &ParameterStore, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut a = self.net.forward_batch(params, obs)?;
        if self.scale != 1.0 {
            a *= self.scale;
        }
        Ok(a)
    }

    pub fn act_recorded(&self, params: &ParameterStore, obs: ArrayView2<f64>) -> Result<(Array2<f64>, MlpTape)> {
        let (mut a, tape) = self.net.forward_recorded(params, obs)?;
        if self.scale != 1.0 {
            a *= self.scale;
        }
        Ok((a, tape))
    }

    /// Accumulates `d(objective)/d(theta)` given `d(objective)/d(action)`.
    pub fn backward(&self, params: &mut ParameterStore, tape: &MlpTape, action_grad: ArrayView2<f64>) -> Result<()> {
        let dy = if self.scale != 1.0 {
            &action_grad * self.scale
        } else {
            action_grad.to_owned()
        };
        self.net.backward(params, tape, dy.view())?;
        Ok(())
    }
}

/// Adds `N(0, noise_scale^2)` to each component, then projects back into the space.
pub fn explore<R: Rng + ?Sized>(action: &[f64], space: ActionSpace, noise_scale: f64, rng: &mut R) -> Vec<f64> {
    if noise_scale == 0.0 {
        return action.to_vec();
    }
    let mut a: Vec<f64> = action
        .iter()
        .map(|v| v + noise_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    space.project(&mut a);
    a
}

/// Linear anneal from `start` to `end` over the first `anneal_episodes`
/// episodes, constant afterwards.
pub fn noise_schedule(episode: usize, start: f64, end: f64, anneal_episodes: usize) -> f64 {
    if episode >= anneal_episodes {
        return end;
    }
    let frac = episode as f64 / anneal_episodes as f64;
    start + (end - start) * frac
}
