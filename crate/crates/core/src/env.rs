//! The multi-agent environment contract shared by the routing and particle worlds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the simplex sum of a split action.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// One observation vector per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct JointObservation(pub Vec<Vec<f64>>);

impl JointObservation {
    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    /// The joint state `s`: all observations concatenated in agent order.
    pub fn concat(&self) -> Vec<f64> {
        self.0.concat()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointAction(pub Vec<Vec<f64>>);

impl JointAction {
    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.0[i]
    }

    pub fn concat(&self) -> Vec<f64> {
        self.0.concat()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: JointObservation,
    pub rewards: Vec<f64>,
    pub done: bool,
    /// The episode ended in a true terminal state (for example a catch).
    /// Hitting the horizon sets `done` without `terminal`, since the time
    /// limit is not part of any observation.
    pub terminal: bool,
    /// Diagnostics such as `"mlu"`.
    pub info: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    /// Probability simplex over `dim` entries.
    Simplex { dim: usize },
    /// Componentwise box `[low, high]^dim`.
    Box { dim: usize, low: f64, high: f64 },
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match *self {
            ActionSpace::Simplex { dim } | ActionSpace::Box { dim, .. } => dim,
        }
    }

    /// Errors with a description of the violation; never adjusts the action.
    pub fn check(&self, action: &[f64]) -> std::result::Result<(), String> {
        if action.len() != self.dim() {
            return Err(format!("expected {} components, got {}", self.dim(), action.len()));
        }
        if let Some(v) = action.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite component {v}"));
        }
        match *self {
            ActionSpace::Simplex { .. } => {
                if let Some(v) = action.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(format!("ratio {v} outside [0, 1]"));
                }
                let sum: f64 = action.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(format!("ratios sum to {sum}, not 1"));
                }
            }
            ActionSpace::Box { low, high, .. } => {
                if let Some(v) = action.iter().find(|v| !(low..=high).contains(*v)) {
                    return Err(format!("component {v} outside [{low}, {high}]"));
                }
            }
        }
        Ok(())
    }

    /// Projects an arbitrary vector back into the space: box clipping, or
    /// clamping at zero followed by renormalization for the simplex.
    pub fn project(&self, action: &mut [f64]) {
        match *self {
            ActionSpace::Simplex { dim } => {
                action.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                let sum: f64 = action.iter().sum();
                if sum > 0.0 {
                    action.iter_mut().for_each(|v| *v /= sum);
                } else {
                    action.iter_mut().for_each(|v| *v = 1.0 / dim as f64);
                }
            }
            ActionSpace::Box { low, high, .. } => {
                action.iter_mut().for_each(|v| *v = v.clamp(low, high));
            }
        }
    }
}

/// A cooperative multi-agent environment with per-agent observations.
///
/// Trajectories are a pure function of the reset seed and the action sequence.
pub trait Environment {
    fn n_agents(&self) -> usize;
    fn observation_dims(&self) -> Vec<usize>;
    fn action_spaces(&self) -> Vec<ActionSpace>;
    fn horizon(&self) -> usize;
    fn reset(&mut self, seed: u64) -> JointObservation;
    fn step(&mut self, action: &JointAction) -> Result<StepResult>;
}

/// Maps a joint observation to a joint action at execution time.
pub trait JointPolicy {
    fn act(&self, observation: &JointObservation) -> Result<JointAction>;
}

/// Per-step record of an evaluation rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub observation: JointObservation,
    pub action: JointAction,
    pub result: StepResult,
}

/// Runs one noise-free episode from `reset(seed)` until the environment ends it.
pub fn rollout<E: Environment + ?Sized, P: JointPolicy + ?Sized>(
    env: &mut E,
    policy: &P,
    seed: u64,
) -> Result<Vec<RolloutStep>> {
    let mut observation = env.reset(seed);
    let mut steps = Vec::with_capacity(env.horizon());
    loop {
        let action = policy.act(&observation)?;
        let result = env.step(&action)?;
        let done = result.done;
        let next = result.observation.clone();
        steps.push(RolloutStep {
            observation,
            action,
            result,
        });
        if done {
            return Ok(steps);
        }
        observation = next;
    }
}

/// Mean over steps of the agents' mean reward.
pub fn mean_shared_reward(steps: &[RolloutStep]) -> f64 {
    if steps.is_empty() {
        return 0.0;
    }
    let total: f64 = steps
        .iter()
        .map(|s| s.result.rewards.iter().sum::<f64>() / s.result.rewards.len() as f64)
        .sum();
    total / steps.len() as f64
}

/// Episode lifecycle bookkeeping shared by the environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) enum Lifecycle {
    #[default]
    Fresh,
    Running,
    Done,
}

impl Lifecycle {
    pub(crate) fn check_step(self) -> Result<()> {
        match self {
            Lifecycle::Fresh => Err(Error::Usage("step called before reset".into())),
            Lifecycle::Done => Err(Error::Usage("step called after the episode ended; reset first".into())),
            Lifecycle::Running => Ok(()),
        }
    }
}

/// Validates every agent's action against its declared space.
pub(crate) fn check_joint_action(spaces: &[ActionSpace], action: &JointAction) -> Result<()> {
    if action.n_agents() != spaces.len() {
        return Err(Error::Contract(format!(
            "joint action has {} agents, environment has {}",
            action.n_agents(),
            spaces.len()
        )));
    }
    for (i, (space, a)) in spaces.iter().zip(&action.0).enumerate() {
        space
            .check(a)
            .map_err(|e| Error::Contract(format!("agent {i}: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_check() {
        let s = ActionSpace::Simplex { dim: 2 };
        assert!(s.check(&[0.3, 0.7]).is_ok());
        assert!(s.check(&[0.3, 0.6]).is_err());
        assert!(s.check(&[1.2, -0.2]).is_err());
        assert!(s.check(&[1.0]).is_err());
    }

    #[test]
    fn box_check_and_project() {
        let b = ActionSpace::Box { dim: 2, low: -1.0, high: 1.0 };
        assert!(b.check(&[1.0, -1.0]).is_ok());
        assert!(b.check(&[1.01, 0.0]).is_err());
        let mut a = [2.0, -3.0];
        b.project(&mut a);
        assert_eq!(a, [1.0, -1.0]);
    }

    #[test]
    fn simplex_projection_lands_on_simplex() {
        let s = ActionSpace::Simplex { dim: 3 };
        let mut a = [0.7, -0.1, 0.6];
        s.project(&mut a);
        assert!(s.check(&a).is_ok());
        let mut z = [-1.0, -2.0, -0.5];
        s.project(&mut z);
        assert_eq!(z, [1.0 / 3.0; 3]);
    }
}
