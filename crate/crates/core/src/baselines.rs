//! Rule-based reference policies: weighted-cost multipath splitting for routing
//! and greedy movement for the particle tasks.

use crate::env::{JointAction, JointObservation, JointPolicy};
use crate::particle::{dist, ParticleTask, Vec2, N_AGENTS, N_LANDMARKS};
use crate::routing::ObservationLayout;
use crate::{Error, Result};

/// Guards idle paths in the inverse-cost weights.
pub const WCMP_EPS: f64 = 1e-3;

/// Distance below which a greedy agent counts as arrived.
pub const ARRIVAL_TOL: f64 = 1e-6;

/// Splits in proportion to `1 / (cost + WCMP_EPS)`, normalized to the simplex.
/// An infinite cost gives that path ratio 0.
pub fn wcmp_split(costs: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = costs.iter().map(|c| 1.0 / (c.max(0.0) + WCMP_EPS)).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|w| w / total).collect()
}

/// Path costs: the sum of the latest utilizations of each path's links.
pub fn path_costs(latest_utilizations: &[f64], path_slots: &[Vec<usize>]) -> Vec<f64> {
    path_slots
        .iter()
        .map(|slots| slots.iter().map(|&s| latest_utilizations[s]).sum())
        .collect()
}

fn toward(from: Vec2, to: Vec2, speed: f64) -> Vec2 {
    let d = dist(from, to);
    if d <= ARRIVAL_TOL {
        return [0.0, 0.0];
    }
    [speed * (to[0] - from[0]) / d, speed * (to[1] - from[1]) / d]
}

/// Full-speed velocity toward the nearest landmark; ties go to the lowest index.
pub fn greedy_navigate(agent_position: Vec2, landmark_positions: &[Vec2], v_max: f64) -> Vec2 {
    let mut best: Option<(usize, f64)> = None;
    for (j, &l) in landmark_positions.iter().enumerate() {
        let d = dist(agent_position, l);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    match best {
        Some((j, _)) => toward(agent_position, landmark_positions[j], v_max),
        None => [0.0, 0.0],
    }
}

/// Full-speed velocity toward the prey's current position.
pub fn greedy_pursue(predator_position: Vec2, prey_position: Vec2, v_max: f64) -> Vec2 {
    toward(predator_position, prey_position, v_max)
}

/// WCMP driven by each agent's own observation: path costs come from the
/// newest utilization entries of the observed links.
#[derive(Debug, Clone)]
pub struct WcmpPolicy {
    layouts: Vec<ObservationLayout>,
}

impl WcmpPolicy {
    pub fn new(layouts: Vec<ObservationLayout>) -> Self {
        Self { layouts }
    }
}

impl JointPolicy for WcmpPolicy {
    fn act(&self, observation: &JointObservation) -> Result<JointAction> {
        if observation.n_agents() != self.layouts.len() {
            return Err(Error::Shape(format!(
                "{} observations for {} routing agents",
                observation.n_agents(),
                self.layouts.len()
            )));
        }
        let actions = self
            .layouts
            .iter()
            .zip(&observation.0)
            .map(|(layout, obs)| {
                if obs.len() != layout.len() {
                    return Err(Error::Shape(format!(
                        "routing observation has length {}, expected {}",
                        obs.len(),
                        layout.len()
                    )));
                }
                let latest: Vec<f64> = (0..layout.observable_links.len())
                    .map(|slot| layout.latest_utilization(obs, slot))
                    .collect();
                Ok(wcmp_split(&path_costs(&latest, &layout.path_slots)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(JointAction(actions))
    }
}

/// Greedy navigation or pursuit from relative positions in the observation.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy {
    pub task: ParticleTask,
    pub v_max: f64,
}

/// Start of the landmark (or prey) block in a particle observation.
const ENTITY_OFFSET: usize = 2 + 4 * (N_AGENTS - 1);

impl JointPolicy for GreedyPolicy {
    fn act(&self, observation: &JointObservation) -> Result<JointAction> {
        let want = match self.task {
            ParticleTask::CooperativeNavigation => ENTITY_OFFSET + 2 * N_LANDMARKS,
            ParticleTask::PredatorPrey => ENTITY_OFFSET + 4,
        };
        let actions = observation
            .0
            .iter()
            .map(|obs| {
                if obs.len() != want {
                    return Err(Error::Shape(format!(
                        "particle observation has length {}, expected {want}",
                        obs.len()
                    )));
                }
                let rel = &obs[ENTITY_OFFSET..];
                let v = match self.task {
                    ParticleTask::CooperativeNavigation => {
                        let landmarks: Vec<Vec2> = rel.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
                        greedy_navigate([0.0, 0.0], &landmarks, self.v_max)
                    }
                    ParticleTask::PredatorPrey => greedy_pursue([0.0, 0.0], [rel[0], rel[1]], self.v_max),
                };
                Ok(v.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(JointAction(actions))
    }
}
