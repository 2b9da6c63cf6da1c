//! Fluid traffic-engineering simulator.
//!
//! Each agent is an edge router holding one aggregated demand that it splits
//! across its candidate paths. Link utilization is carried flow over capacity
//! (overload allowed) and every agent receives the shared reward `1 - MLU`,
//! where MLU is the maximum utilization over all links.

mod topology;

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use topology::{load_topology, DemandPair, Link, Path, Topology};

use crate::env::{check_joint_action, ActionSpace, Environment, JointAction, JointObservation, Lifecycle, StepResult};
use crate::{Error, Result};

/// Utilization snapshots kept per link and exposed in observations.
pub const HISTORY_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub horizon: usize,
    /// Per-step multiplicative demand noise, uniform in `±demand_noise`.
    pub demand_noise: f64,
    /// Weight of the optional local-utilization bonus; zero disables it.
    pub exploration_bonus: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            demand_noise: 0.2,
            exploration_bonus: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    /// Buffered flow per demand pair, to be routed on the next step.
    pub demands: Vec<f64>,
    /// Flow carried by each link on the last step.
    pub link_flows: Vec<f64>,
    /// Per link, the last [`HISTORY_LEN`] utilizations, newest first.
    pub utilization_history: Vec<VecDeque<f64>>,
    /// Per agent, the previous split (zeros after reset).
    pub last_actions: Vec<Vec<f64>>,
}

impl TrafficState {
    fn zeroed(topology: &Topology) -> Self {
        Self {
            demands: vec![0.0; topology.n_agents()],
            link_flows: vec![0.0; topology.links.len()],
            utilization_history: vec![VecDeque::from(vec![0.0; HISTORY_LEN]); topology.links.len()],
            last_actions: topology.paths.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// Utilizations of the most recent step.
    pub fn latest_utilizations(&self) -> Vec<f64> {
        self.utilization_history.iter().map(|h| h[0]).collect()
    }
}

/// Splits `demand` over paths. The last path takes the residual so that the
/// flows sum to `demand` exactly.
pub fn apply_split(demand: f64, ratios: &[f64]) -> Result<Vec<f64>> {
    ActionSpace::Simplex { dim: ratios.len() }
        .check(ratios)
        .map_err(|e| Error::Contract(format!("split action: {e}")))?;
    if !(demand >= 0.0) || !demand.is_finite() {
        return Err(Error::Contract(format!("demand must be finite and >= 0, got {demand}")));
    }
    let n = ratios.len();
    let mut flows: Vec<f64> = ratios[..n - 1].iter().map(|r| demand * r).collect();
    let mut head: f64 = flows.iter().sum();
    if head > demand {
        let scale = demand / head;
        flows.iter_mut().for_each(|f| *f *= scale);
        head = flows.iter().sum();
    }
    // Scaling can leave the head an ulp above the demand; trim the largest flow.
    for _ in 0..8 {
        if head <= demand {
            break;
        }
        let excess = head - demand;
        if let Some(f) = flows.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *f = (*f - excess).max(0.0);
        }
        head = flows.iter().sum();
    }
    // The rounding of `head + residual` can miss `demand` for every residual
    // (ties round to even); then nudge the largest head flow by an ulp and retry.
    for _ in 0..8 {
        if let Some(residual) = exact_residual(head, demand) {
            flows.push(residual);
            return Ok(flows);
        }
        if let Some(f) = flows.iter_mut().filter(|f| **f > 0.0).max_by(|a, b| a.total_cmp(b)) {
            *f = f.next_down();
        }
        head = flows.iter().sum();
    }
    Err(Error::Numerical(format!("cannot split demand {demand} exactly")))
}

fn exact_residual(head: f64, demand: f64) -> Option<f64> {
    let mut residual = (demand - head).max(0.0);
    for _ in 0..8 {
        let total = head + residual;
        if total == demand {
            return Some(residual);
        }
        residual = if total < demand { residual.next_up() } else { residual.next_down().max(0.0) };
    }
    None
}

/// Per-link carried flow given every agent's per-path flows.
pub fn compute_link_flows(topology: &Topology, per_path_flows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if per_path_flows.len() != topology.n_agents() {
        return Err(Error::Shape(format!(
            "flows for {} agents, topology has {}",
            per_path_flows.len(),
            topology.n_agents()
        )));
    }
    let mut load = vec![0.0; topology.links.len()];
    for (agent, flows) in per_path_flows.iter().enumerate() {
        let paths = &topology.paths[agent];
        if flows.len() != paths.len() {
            return Err(Error::Shape(format!(
                "agent {agent} gave {} path flows for {} paths",
                flows.len(),
                paths.len()
            )));
        }
        for (path, &f) in paths.iter().zip(flows) {
            for &l in &path.links {
                load[l] += f;
            }
        }
    }
    Ok(load)
}

/// Link utilization: summed flow of all traversing paths over capacity.
pub fn compute_utilizations(topology: &Topology, per_path_flows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let load = compute_link_flows(topology, per_path_flows)?;
    Ok(load
        .iter()
        .zip(&topology.links)
        .map(|(f, l)| f / l.capacity)
        .collect())
}

pub fn max_utilization(utilizations: &[f64]) -> f64 {
    utilizations.iter().copied().fold(0.0, f64::max)
}

/// `1 - MLU`.
pub fn reward_from_mlu(utilizations: &[f64]) -> f64 {
    1.0 - max_utilization(utilizations)
}

/// Where each part of an agent's observation lives.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLayout {
    /// Link ids whose histories appear in the observation, in order.
    pub observable_links: Vec<usize>,
    /// For each candidate path, indices into `observable_links`.
    pub path_slots: Vec<Vec<usize>>,
}

impl ObservationLayout {
    fn new(topology: &Topology, agent: usize) -> Self {
        let observable_links = topology.observable_links(agent);
        let path_slots = topology.paths[agent]
            .iter()
            .map(|p| {
                p.links
                    .iter()
                    .map(|l| observable_links.iter().position(|o| o == l).expect("own link"))
                    .collect()
            })
            .collect();
        Self {
            observable_links,
            path_slots,
        }
    }

    pub fn n_paths(&self) -> usize {
        self.path_slots.len()
    }

    /// `1 + HISTORY_LEN * observable links + paths`.
    pub fn len(&self) -> usize {
        1 + HISTORY_LEN * self.observable_links.len() + self.n_paths()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Most recent utilization of observable slot `slot`, read from an observation.
    pub fn latest_utilization(&self, obs: &[f64], slot: usize) -> f64 {
        obs[1 + slot * HISTORY_LEN]
    }
}

/// Own buffered demand, then the utilization history of each observable link
/// (newest first), then the previous split.
pub fn build_observation(state: &TrafficState, layout: &ObservationLayout, agent: usize) -> Vec<f64> {
    let mut obs = Vec::with_capacity(layout.len());
    obs.push(state.demands[agent]);
    for &l in &layout.observable_links {
        obs.extend(state.utilization_history[l].iter().copied());
    }
    obs.extend_from_slice(&state.last_actions[agent]);
    obs
}

#[derive(Debug, Clone)]
pub struct RoutingEnv {
    topology: Topology,
    config: RoutingConfig,
    layouts: Vec<ObservationLayout>,
    state: TrafficState,
    base_demands: Vec<f64>,
    rng: ChaCha8Rng,
    lifecycle: Lifecycle,
    steps: usize,
}

impl RoutingEnv {
    pub fn new(topology: Topology, config: RoutingConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::Config("routing horizon must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&config.demand_noise) {
            return Err(Error::Config(format!(
                "demand noise must lie in [0, 1), got {}",
                config.demand_noise
            )));
        }
        let layouts = (0..topology.n_agents())
            .map(|a| ObservationLayout::new(&topology, a))
            .collect();
        Ok(Self {
            state: TrafficState::zeroed(&topology),
            base_demands: vec![0.0; topology.n_agents()],
            layouts,
            topology,
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
            lifecycle: Lifecycle::Fresh,
            steps: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn config(&self) -> &RoutingConfig {
        &self.config
    }

    pub fn state(&self) -> &TrafficState {
        &self.state
    }

    pub fn layout(&self, agent: usize) -> &ObservationLayout {
        &self.layouts[agent]
    }

    pub fn layouts(&self) -> &[ObservationLayout] {
        &self.layouts
    }

    /// Overrides the buffered demands of the current step.
    pub fn set_demands(&mut self, demands: &[f64]) -> Result<()> {
        if demands.len() != self.state.demands.len() || demands.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::Config("demands must be one nonnegative value per agent".into()));
        }
        self.state.demands.copy_from_slice(demands);
        Ok(())
    }

    /// Freezes demands at their current values for the rest of the episode.
    pub fn freeze_demands(&mut self) {
        self.base_demands.copy_from_slice(&self.state.demands);
        self.config.demand_noise = 0.0;
    }

    fn sample_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn draw_demands(&mut self) {
        let noise = self.config.demand_noise;
        for i in 0..self.base_demands.len() {
            let factor = if noise > 0.0 { 1.0 + self.sample_range(-noise, noise) } else { 1.0 };
            self.state.demands[i] = self.base_demands[i] * factor;
        }
    }

    fn observe(&self) -> JointObservation {
        JointObservation(
            (0..self.topology.n_agents())
                .map(|a| build_observation(&self.state, &self.layouts[a], a))
                .collect(),
        )
    }
}

impl Environment for RoutingEnv {
    fn n_agents(&self) -> usize {
        self.topology.n_agents()
    }

    fn observation_dims(&self) -> Vec<usize> {
        self.layouts.iter().map(ObservationLayout::len).collect()
    }

    fn action_spaces(&self) -> Vec<ActionSpace> {
        self.topology
            .paths
            .iter()
            .map(|p| ActionSpace::Simplex { dim: p.len() })
            .collect()
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, seed: u64) -> JointObservation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = TrafficState::zeroed(&self.topology);
        for i in 0..self.topology.n_agents() {
            let (lo, hi) = (self.topology.demands[i].min, self.topology.demands[i].max);
            self.base_demands[i] = self.sample_range(lo, hi);
        }
        self.draw_demands();
        self.steps = 0;
        self.lifecycle = Lifecycle::Running;
        self.observe()
    }

    fn step(&mut self, action: &JointAction) -> Result<StepResult> {
        self.lifecycle.check_step()?;
        check_joint_action(&self.action_spaces(), action)?;
        let flows = action
            .0
            .iter()
            .zip(&self.state.demands)
            .map(|(a, &d)| apply_split(d, a))
            .collect::<Result<Vec<_>>>()?;
        let link_flows = compute_link_flows(&self.topology, &flows)?;
        let utils: Vec<f64> = link_flows
            .iter()
            .zip(&self.topology.links)
            .map(|(f, l)| f / l.capacity)
            .collect();
        let mlu = max_utilization(&utils);
        let shared = 1.0 - mlu;
        let beta = self.config.exploration_bonus;
        let rewards = (0..self.n_agents())
            .map(|a| {
                if beta > 0.0 {
                    let local = self.layouts[a]
                        .observable_links
                        .iter()
                        .map(|&l| utils[l])
                        .fold(0.0, f64::max);
                    shared + beta * (1.0 - local)
                } else {
                    shared
                }
            })
            .collect();

        for (hist, &u) in self.state.utilization_history.iter_mut().zip(&utils) {
            hist.pop_back();
            hist.push_front(u);
        }
        self.state.link_flows = link_flows;
        self.state.last_actions = action.0.clone();
        self.draw_demands();
        self.steps += 1;
        let done = self.steps >= self.config.horizon;
        if done {
            self.lifecycle = Lifecycle::Done;
        }
        let mut info = BTreeMap::new();
        info.insert("mlu".to_owned(), mlu);
        info.insert("shared_reward".to_owned(), shared);
        Ok(StepResult {
            observation: self.observe(),
            rewards,
            done,
            terminal: false,
            info,
        })
    }
}
