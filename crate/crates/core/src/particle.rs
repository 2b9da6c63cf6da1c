//! Particle worlds on a 10x10 plane: cooperative navigation (three agents cover
//! three static landmarks) and predator-prey (three predators chase a scripted prey).
//!
//! Kinematics are first order: the action is a velocity in `[-v_max, v_max]^2`
//! and positions advance by `v * dt`, clamped to the walls.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{check_joint_action, ActionSpace, Environment, JointAction, JointObservation, Lifecycle, StepResult};
use crate::{Error, Result};

pub type Vec2 = [f64; 2];

pub const N_AGENTS: usize = 3;
pub const N_LANDMARKS: usize = 3;
pub const CATCH_BONUS: f64 = 10.0;

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleTask {
    CooperativeNavigation,
    PredatorPrey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub horizon: usize,
    pub dt: f64,
    pub v_max: f64,
    pub world_size: f64,
    pub catch_radius: f64,
    /// Probability that the prey flees the nearest predator on a step;
    /// otherwise it moves in a uniformly random direction.
    pub prey_flee_prob: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            horizon: 25,
            dt: 0.25,
            v_max: 1.0,
            world_size: 10.0,
            catch_radius: 0.5,
            prey_flee_prob: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prey {
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agent_positions: Vec<Vec2>,
    /// Realized velocities of the last step (displacement over `dt`).
    pub agent_velocities: Vec<Vec2>,
    /// Landmarks (navigation only; empty in predator-prey).
    pub landmark_positions: Vec<Vec2>,
    /// The prey (predator-prey only).
    pub prey: Option<Prey>,
    pub step_count: usize,
}

/// `-sum over landmarks of the distance to the nearest agent`.
pub fn spread_reward(agent_positions: &[Vec2], landmark_positions: &[Vec2]) -> f64 {
    -landmark_positions
        .iter()
        .map(|&l| {
            agent_positions
                .iter()
                .map(|&a| dist(a, l))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
}

/// `-distance of the nearest predator`, plus the catch bonus when caught.
pub fn pursuit_reward(predator_positions: &[Vec2], prey_position: Vec2, catch_flag: bool) -> f64 {
    let nearest = predator_positions
        .iter()
        .map(|&p| dist(p, prey_position))
        .fold(f64::INFINITY, f64::min);
    -nearest + if catch_flag { CATCH_BONUS } else { 0.0 }
}

/// Own velocity, then relative positions and relative velocities of the other
/// agents, then relative landmark positions (navigation) or relative prey
/// position and velocity (pursuit). Entities appear in index order.
pub fn build_observation(state: &WorldState, agent: usize) -> Vec<f64> {
    let me = state.agent_positions[agent];
    let my_v = state.agent_velocities[agent];
    let mut obs = Vec::with_capacity(observation_len(state.landmark_positions.len(), state.prey.is_some()));
    obs.extend_from_slice(&my_v);
    for (j, &p) in state.agent_positions.iter().enumerate() {
        if j != agent {
            obs.extend_from_slice(&sub(p, me));
        }
    }
    for (j, &v) in state.agent_velocities.iter().enumerate() {
        if j != agent {
            obs.extend_from_slice(&sub(v, my_v));
        }
    }
    for &l in &state.landmark_positions {
        obs.extend_from_slice(&sub(l, me));
    }
    if let Some(prey) = &state.prey {
        obs.extend_from_slice(&sub(prey.position, me));
        obs.extend_from_slice(&sub(prey.velocity, my_v));
    }
    obs
}

fn observation_len(landmarks: usize, prey: bool) -> usize {
    2 + 4 * (N_AGENTS - 1) + 2 * landmarks + if prey { 4 } else { 0 }
}

#[derive(Debug, Clone)]
pub struct ParticleEnv {
    task: ParticleTask,
    config: ParticleConfig,
    state: WorldState,
    rng: ChaCha8Rng,
    lifecycle: Lifecycle,
}

impl ParticleEnv {
    pub fn new(task: ParticleTask, config: ParticleConfig) -> Result<Self> {
        if config.horizon == 0 || !(config.dt > 0.0) || !(config.v_max > 0.0) || !(config.world_size > 0.0) {
            return Err(Error::Config(
                "particle horizon, dt, v_max and world size must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.prey_flee_prob) || config.catch_radius < 0.0 {
            return Err(Error::Config("prey flee probability or catch radius out of range".into()));
        }
        Ok(Self {
            task,
            state: WorldState {
                agent_positions: vec![[0.0; 2]; N_AGENTS],
                agent_velocities: vec![[0.0; 2]; N_AGENTS],
                landmark_positions: Vec::new(),
                prey: None,
                step_count: 0,
            },
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            lifecycle: Lifecycle::Fresh,
        })
    }

    pub fn task(&self) -> ParticleTask {
        self.task
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Starts an episode from an explicit configuration; `seed` drives the prey.
    pub fn reset_to(&mut self, state: WorldState, seed: u64) -> Result<JointObservation> {
        let ok = state.agent_positions.len() == N_AGENTS
            && state.agent_velocities.len() == N_AGENTS
            && match self.task {
                ParticleTask::CooperativeNavigation => {
                    state.landmark_positions.len() == N_LANDMARKS && state.prey.is_none()
                }
                ParticleTask::PredatorPrey => state.landmark_positions.is_empty() && state.prey.is_some(),
            };
        if !ok {
            return Err(Error::Config("world state does not match the task layout".into()));
        }
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = state;
        self.state.step_count = 0;
        self.lifecycle = Lifecycle::Running;
        Ok(self.observe())
    }

    fn random_point(&mut self) -> Vec2 {
        let s = self.config.world_size;
        [self.rng.random_range(0.0..s), self.rng.random_range(0.0..s)]
    }

    fn clamp(&self, p: Vec2) -> Vec2 {
        let s = self.config.world_size;
        [p[0].clamp(0.0, s), p[1].clamp(0.0, s)]
    }

    fn observe(&self) -> JointObservation {
        JointObservation((0..N_AGENTS).map(|i| build_observation(&self.state, i)).collect())
    }

    fn caught(&self) -> bool {
        match &self.state.prey {
            Some(prey) => self
                .state
                .agent_positions
                .iter()
                .any(|&p| dist(p, prey.position) <= self.config.catch_radius),
            None => false,
        }
    }

    /// Current shared reward and catch flag.
    pub fn current_reward(&self) -> (f64, bool) {
        match &self.state.prey {
            None => (
                spread_reward(&self.state.agent_positions, &self.state.landmark_positions),
                false,
            ),
            Some(prey) => {
                let caught = self.caught();
                (pursuit_reward(&self.state.agent_positions, prey.position, caught), caught)
            }
        }
    }

    fn move_prey(&mut self) {
        let Some(prey) = self.state.prey.clone() else {
            return;
        };
        let speed = self.config.v_max;
        let flee = self.rng.random::<f64>() < self.config.prey_flee_prob;
        let nearest = self
            .state
            .agent_positions
            .iter()
            .copied()
            .min_by(|a, b| dist(*a, prey.position).total_cmp(&dist(*b, prey.position)))
            .expect("three predators");
        let away = sub(prey.position, nearest);
        let norm = away[0].hypot(away[1]);
        let dir = if flee && norm > 1e-12 {
            [away[0] / norm, away[1] / norm]
        } else {
            let theta = self.rng.random_range(0.0..std::f64::consts::TAU);
            [theta.cos(), theta.sin()]
        };
        let dt = self.config.dt;
        let next = self.clamp([
            prey.position[0] + speed * dir[0] * dt,
            prey.position[1] + speed * dir[1] * dt,
        ]);
        self.state.prey = Some(Prey {
            velocity: [(next[0] - prey.position[0]) / dt, (next[1] - prey.position[1]) / dt],
            position: next,
        });
    }
}

impl Environment for ParticleEnv {
    fn n_agents(&self) -> usize {
        N_AGENTS
    }

    fn observation_dims(&self) -> Vec<usize> {
        let len = match self.task {
            ParticleTask::CooperativeNavigation => observation_len(N_LANDMARKS, false),
            ParticleTask::PredatorPrey => observation_len(0, true),
        };
        vec![len; N_AGENTS]
    }

    fn action_spaces(&self) -> Vec<ActionSpace> {
        let v = self.config.v_max;
        vec![ActionSpace::Box { dim: 2, low: -v, high: v }; N_AGENTS]
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> JointObservation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let agents: Vec<Vec2> = (0..N_AGENTS).map(|_| self.random_point()).collect();
        let (landmarks, prey) = match self.task {
            ParticleTask::CooperativeNavigation => ((0..N_LANDMARKS).map(|_| self.random_point()).collect(), None),
            ParticleTask::PredatorPrey => (
                Vec::new(),
                Some(Prey {
                    position: self.random_point(),
                    velocity: [0.0; 2],
                }),
            ),
        };
        self.state = WorldState {
            agent_positions: agents,
            agent_velocities: vec![[0.0; 2]; N_AGENTS],
            landmark_positions: landmarks,
            prey,
            step_count: 0,
        };
        self.lifecycle = Lifecycle::Running;
        self.observe()
    }

    fn step(&mut self, action: &JointAction) -> Result<StepResult> {
        self.lifecycle.check_step()?;
        check_joint_action(&self.action_spaces(), action)?;
        let dt = self.config.dt;
        for (i, a) in action.0.iter().enumerate() {
            let p = self.state.agent_positions[i];
            let next = self.clamp([p[0] + a[0] * dt, p[1] + a[1] * dt]);
            self.state.agent_velocities[i] = [(next[0] - p[0]) / dt, (next[1] - p[1]) / dt];
            self.state.agent_positions[i] = next;
        }
        if !self.caught() {
            self.move_prey();
        }
        let (reward, caught) = self.current_reward();
        self.state.step_count += 1;
        let done = caught || self.state.step_count >= self.config.horizon;
        if done {
            self.lifecycle = Lifecycle::Done;
        }
        let mut info = BTreeMap::new();
        if self.task == ParticleTask::PredatorPrey {
            info.insert("caught".to_owned(), if caught { 1.0 } else { 0.0 });
        }
        Ok(StepResult {
            observation: self.observe(),
            rewards: vec![reward; N_AGENTS],
            done,
            terminal: caught,
            info,
        })
    }
}
