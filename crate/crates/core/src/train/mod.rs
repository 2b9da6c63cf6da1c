//! Centralized training with decentralized execution for the DDPG family:
//! independent DDPG, MADDPG, the uniformly merged K-head ablation and the
//! attention critic.
//!
//! Every agent owns an actor, a critic, target copies of both and two Adam
//! optimizers. After a warmup, each environment step performs, for every agent,
//! one critic step on the squared TD error, one actor step along
//! `grad_theta mu(o_i) * grad_{a_i} Q_i`, and a soft update of both targets.

pub mod actor;
pub mod replay;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::critic::{
    AttentionCritic, AttentionCriticConfig, CriticInputs, CriticLayout, CriticNet, HeadMerge, MlpCritic,
};
use crate::env::{ActionSpace, Environment, JointAction, JointObservation, JointPolicy};
use crate::nn::{soft_update, Adam, AdamConfig, ParameterStore};
use crate::{Error, Result};

pub use actor::{explore, noise_schedule, Actor};
pub use replay::{Batch, ReplayBuffer, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AttMaddpg,
    Maddpg,
    Khead,
    Ddpg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AttMaddpg => "att_maddpg",
            Algorithm::Maddpg => "maddpg",
            Algorithm::Khead => "khead",
            Algorithm::Ddpg => "ddpg",
        }
    }

    pub fn uses_heads(self) -> bool {
        matches!(self, Algorithm::AttMaddpg | Algorithm::Khead)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub actor_hidden: Vec<usize>,
    /// Width of every layer inside the attention critic.
    pub critic_width: usize,
    /// Hidden layers of the plain MLP critics.
    pub mlp_critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// No updates until the buffer holds this many tuples.
    pub warmup: usize,
    pub noise_start: f64,
    pub noise_end: f64,
    /// Fraction of the run over which the noise scale is annealed.
    pub noise_anneal_fraction: f64,
    pub episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::AttMaddpg,
            k: 4,
            actor_hidden: vec![32, 32],
            critic_width: 32,
            mlp_critic_hidden: vec![64, 64],
            actor_lr: 0.001,
            critic_lr: 0.01,
            tau: 0.001,
            gamma: 0.95,
            buffer_capacity: 100_000,
            batch_size: 128,
            warmup: 1024,
            noise_start: 0.3,
            noise_end: 0.05,
            noise_anneal_fraction: 0.5,
            episodes: 300,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.algorithm.uses_heads() && self.k < 2 {
            return bad("k", format!("{} needs K >= 2, got {}", self.algorithm.name(), self.k));
        }
        if self.actor_hidden.contains(&0) || self.mlp_critic_hidden.contains(&0) {
            return bad("hidden", "layer widths must be >= 1".into());
        }
        if self.critic_width == 0 {
            return bad("critic_width", "must be >= 1".into());
        }
        for (field, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(field, format!("must be > 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", format!("must lie in [0, 1], got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", format!("must lie in [0, 1], got {}", self.gamma));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return bad("buffer_capacity/batch_size", "must be >= 1".into());
        }
        if self.noise_start < 0.0 || self.noise_end < 0.0 {
            return bad("noise", "scales must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise_anneal_fraction) {
            return bad("noise_anneal_fraction", format!("must lie in [0, 1], got {}", self.noise_anneal_fraction));
        }
        Ok(())
    }

    pub fn anneal_episodes(&self) -> usize {
        (self.noise_anneal_fraction * self.episodes as f64).round() as usize
    }
}

/// Everything needed to rebuild the networks of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub algorithm: Algorithm,
    pub k: usize,
    pub obs_dims: Vec<usize>,
    pub action_spaces: Vec<ActionSpace>,
    pub actor_hidden: Vec<usize>,
    pub critic_width: usize,
    pub mlp_critic_hidden: Vec<usize>,
}

impl ModelSpec {
    pub fn new(config: &TrainConfig, obs_dims: Vec<usize>, action_spaces: Vec<ActionSpace>) -> Result<Self> {
        if obs_dims.len() != action_spaces.len() || obs_dims.is_empty() {
            return Err(Error::Config(format!(
                "{} observation dims for {} action spaces",
                obs_dims.len(),
                action_spaces.len()
            )));
        }
        Ok(Self {
            algorithm: config.algorithm,
            k: config.k,
            obs_dims,
            action_spaces,
            actor_hidden: config.actor_hidden.clone(),
            critic_width: config.critic_width,
            mlp_critic_hidden: config.mlp_critic_hidden.clone(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.obs_dims.len()
    }

    pub fn act_dims(&self) -> Vec<usize> {
        self.action_spaces.iter().map(ActionSpace::dim).collect()
    }

    pub fn layout(&self, agent: usize) -> CriticLayout {
        CriticLayout::new(self.obs_dims.clone(), self.act_dims(), agent)
    }

    pub fn build_actor(&self, agent: usize) -> Result<Actor> {
        Actor::new(self.obs_dims[agent], self.actor_hidden.clone(), self.action_spaces[agent])
    }

    pub fn build_critic(&self, agent: usize) -> Result<CriticNet> {
        let w = self.critic_width;
        let att = || AttentionCriticConfig {
            vec_dim: w,
            encoder_width: w,
            head_hidden: w,
            embed_hidden: w,
            ..AttentionCriticConfig::new(self.obs_dims.clone(), self.act_dims(), agent, self.k)
        };
        Ok(match self.algorithm {
            Algorithm::AttMaddpg => CriticNet::Attention(AttentionCritic::new(att(), HeadMerge::Attention)?),
            Algorithm::Khead => CriticNet::Attention(AttentionCritic::new(att(), HeadMerge::Uniform)?),
            Algorithm::Maddpg => CriticNet::Mlp(MlpCritic::new(
                self.layout(agent),
                CriticInputs::Joint,
                self.mlp_critic_hidden.clone(),
            )?),
            Algorithm::Ddpg => CriticNet::Mlp(MlpCritic::new(
                self.layout(agent),
                CriticInputs::Local,
                self.mlp_critic_hidden.clone(),
            )?),
        })
    }
}

/// Online and target networks of one agent plus their optimizers.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub actor: Actor,
    pub critic: CriticNet,
    pub actor_params: ParameterStore,
    pub actor_target: ParameterStore,
    pub critic_params: ParameterStore,
    pub critic_target: ParameterStore,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl AgentRuntime {
    fn new(spec: &ModelSpec, config: &TrainConfig, agent: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let actor = spec.build_actor(agent)?;
        let critic = spec.build_critic(agent)?;
        let mut actor_params = ParameterStore::new();
        actor.register(&mut actor_params, rng)?;
        let mut critic_params = ParameterStore::new();
        critic.register(&mut critic_params, rng)?;
        Ok(Self {
            actor_opt: Adam::new(AdamConfig::with_lr(config.actor_lr), &actor_params)?,
            critic_opt: Adam::new(AdamConfig::with_lr(config.critic_lr), &critic_params)?,
            actor_target: actor_params.clone(),
            critic_target: critic_params.clone(),
            actor,
            critic,
            actor_params,
            critic_params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainStepStats {
    /// Mean squared TD error before the critic step.
    pub critic_loss: f64,
    pub actor_grad_norm: f64,
    pub mean_td_error: f64,
    /// Batch mean of each head's attention weight; empty for MLP critics.
    pub head_weight_means: Vec<f64>,
}

/// `r + gamma * (1 - terminal) * q_next`.
pub fn td_target(reward: f64, gamma: f64, terminal: bool, q_next: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * q_next
    }
}

#[derive(Debug, Clone)]
pub struct MultiAgentTrainer {
    config: TrainConfig,
    spec: ModelSpec,
    agents: Vec<AgentRuntime>,
    replay: ReplayBuffer,
    explore_rng: ChaCha8Rng,
}

/// Independent random streams derived from one run seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const INIT_STREAM: u64 = 1;
const EXPLORE_STREAM: u64 = 2;
const REPLAY_STREAM: u64 = 3;
const ENV_STREAM: u64 = 4;

/// Reset seeds of successive episodes of the run with seed `seed`. Learners and
/// baselines with the same run seed see the same episodes.
pub fn episode_seeds(seed: u64) -> impl Iterator<Item = u64> {
    let mut rng = stream(seed, ENV_STREAM);
    std::iter::repeat_with(move || rng.next_u64())
}

impl MultiAgentTrainer {
    pub fn new(
        config: TrainConfig,
        obs_dims: Vec<usize>,
        action_spaces: Vec<ActionSpace>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let spec = ModelSpec::new(&config, obs_dims, action_spaces)?;
        let mut init = stream(seed, INIT_STREAM);
        let agents = (0..spec.n_agents())
            .map(|i| AgentRuntime::new(&spec, &config, i, &mut init))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            replay: ReplayBuffer::new(config.buffer_capacity, stream(seed, REPLAY_STREAM))?,
            explore_rng: stream(seed, EXPLORE_STREAM),
            config,
            spec,
            agents,
        })
    }

    pub fn for_env<E: Environment + ?Sized>(config: TrainConfig, env: &E, seed: u64) -> Result<Self> {
        Self::new(config, env.observation_dims(), env.action_spaces(), seed)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn agents(&self) -> &[AgentRuntime] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentRuntime] {
        &mut self.agents
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn replay_mut(&mut self) -> &mut ReplayBuffer {
        &mut self.replay
    }

    /// Deterministic actions followed by exploration noise of the given scale.
    pub fn explore_actions(&mut self, obs: &JointObservation, noise_scale: f64) -> Result<JointAction> {
        let mut out = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter().enumerate() {
            let a = agent.actor.act(&agent.actor_params, obs.agent(i))?;
            out.push(explore(&a, agent.actor.space(), noise_scale, &mut self.explore_rng));
        }
        Ok(JointAction(out))
    }

    /// Joint actions `mu_j(o_j)` for every row of a joint-state batch, from the
    /// target actors or the online actors.
    pub fn batch_actions(&self, states: ArrayView2<f64>, target: bool) -> Result<Array2<f64>> {
        let layout = self.spec.layout(0);
        let mut out = Array2::zeros((states.nrows(), layout.action_dim()));
        for (j, agent) in self.agents.iter().enumerate() {
            let params = if target { &agent.actor_target } else { &agent.actor_params };
            let obs = states.slice(s![.., layout.obs_range(j)]);
            let a = agent.actor.act_batch(params, obs)?;
            out.slice_mut(s![.., layout.action_range(j)]).assign(&a);
        }
        Ok(out)
    }

    /// TD targets of agent `i` with every next action taken from the target actors.
    pub fn td_targets(&self, i: usize, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self.batch_actions(batch.next_states.view(), true)?;
        let agent = &self.agents[i];
        let q_next = agent
            .critic
            .evaluate(&agent.critic_target, batch.next_states.view(), next_actions.view())?;
        let gamma = self.config.gamma;
        Ok(Array1::from_shape_fn(batch.len(), |r| {
            td_target(batch.rewards[[r, i]], gamma, batch.terminals[r] != 0.0, q_next[r])
        }))
    }

    /// One Adam step on the mean squared TD error of agent `i`.
    pub fn critic_update(&mut self, i: usize, batch: &Batch) -> Result<TrainStepStats> {
        if batch.is_empty() {
            return Err(Error::Usage("critic update on an empty batch".into()));
        }
        let y = self.td_targets(i, batch)?;
        let agent = &mut self.agents[i];
        let (q, tape) = agent
            .critic
            .forward(&agent.critic_params, batch.states.view(), batch.actions.view())?;
        let delta = &q - &y;
        let n = batch.len() as f64;
        let loss = delta.mapv(|d| d * d).sum() / n;
        let dq = delta.mapv(|d| 2.0 * d / n);
        agent.critic_params.zero_grads();
        agent.critic.backward(&mut agent.critic_params, &tape, &dq, true)?;
        agent.critic_opt.step(&mut agent.critic_params)?;
        let head_weight_means = match &tape {
            crate::critic::CriticTape::Attention(t) => t.output().weights.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default(),
            crate::critic::CriticTape::Mlp(_) => Vec::new(),
        };
        Ok(TrainStepStats {
            critic_loss: loss,
            actor_grad_norm: 0.0,
            mean_td_error: delta.sum() / n,
            head_weight_means,
        })
    }

    /// One Adam ascent step on `mean Q_i(s, mu_1(o_1), ..., mu_N(o_N))` with
    /// respect to actor `i` only; teammates act through their online actors.
    /// Returns the norm of the actor gradient.
    pub fn actor_update(&mut self, i: usize, batch: &Batch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Usage("actor update on an empty batch".into()));
        }
        let layout = self.spec.layout(i);
        let mut actions = self.batch_actions(batch.states.view(), false)?;
        let agent = &mut self.agents[i];
        let obs = batch.states.slice(s![.., layout.obs_range(i)]);
        let (own, actor_tape) = agent.actor.act_recorded(&agent.actor_params, obs)?;
        actions.slice_mut(s![.., layout.action_range(i)]).assign(&own);

        let (_, tape) = agent
            .critic
            .forward(&agent.critic_params, batch.states.view(), actions.view())?;
        let n = batch.len() as f64;
        let dq = Array1::from_elem(batch.len(), -1.0 / n);
        let grads = agent.critic.backward(&mut agent.critic_params, &tape, &dq, false)?;
        let da = grads.actions.slice(s![.., layout.action_range(i)]);
        agent.actor_params.zero_grads();
        agent.actor.backward(&mut agent.actor_params, &actor_tape, da)?;
        let norm = agent.actor_params.grad_norm();
        agent.actor_opt.step(&mut agent.actor_params)?;
        Ok(norm)
    }

    pub fn soft_update_targets(&mut self, i: usize) -> Result<()> {
        let tau = self.config.tau;
        let a = &mut self.agents[i];
        soft_update(&mut a.actor_target, &a.actor_params, tau)?;
        soft_update(&mut a.critic_target, &a.critic_params, tau)
    }

    /// Samples a batch for agent `i` and runs critic, actor and target updates.
    pub fn update_agent(&mut self, i: usize) -> Result<TrainStepStats> {
        let batch = self.replay.sample(self.config.batch_size)?;
        let mut stats = self.critic_update(i, &batch)?;
        stats.actor_grad_norm = self.actor_update(i, &batch)?;
        self.soft_update_targets(i)?;
        Ok(stats)
    }

    /// The trained networks; optimizer state and replay are dropped.
    pub fn export(&self) -> TrainedModel {
        TrainedModel {
            spec: self.spec.clone(),
            actors: self.agents.iter().map(|a| a.actor.clone()).collect(),
            actor_params: self.agents.iter().map(|a| a.actor_params.clone()).collect(),
            critics: self.agents.iter().map(|a| a.critic.clone()).collect(),
            critic_params: self.agents.iter().map(|a| a.critic_params.clone()).collect(),
        }
    }
}

/// Trained online networks of every agent.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub actors: Vec<Actor>,
    pub actor_params: Vec<ParameterStore>,
    pub critics: Vec<CriticNet>,
    pub critic_params: Vec<ParameterStore>,
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut c = Checkpoint::new();
        c.meta.insert(
            "model".into(),
            serde_json::to_value(&self.spec).map_err(|e| Error::Format(e.to_string()))?,
        );
        for i in 0..self.actors.len() {
            c.add_store(&format!("agent{i}/actor/"), &self.actor_params[i]);
            c.add_store(&format!("agent{i}/critic/"), &self.critic_params[i]);
        }
        Ok(c)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let spec = model_spec(c)?;
        let n = spec.n_agents();
        let mut model = TrainedModel {
            actors: Vec::with_capacity(n),
            actor_params: Vec::with_capacity(n),
            critics: Vec::with_capacity(n),
            critic_params: Vec::with_capacity(n),
            spec,
        };
        for i in 0..n {
            let actor = model.spec.build_actor(i)?;
            let critic = model.spec.build_critic(i)?;
            let mut ap = ParameterStore::new();
            actor.net().register_zeros(&mut ap)?;
            c.load_into(&format!("agent{i}/actor/"), &mut ap)?;
            let mut cp = ParameterStore::new();
            register_critic_zeros(&critic, &mut cp)?;
            c.load_into(&format!("agent{i}/critic/"), &mut cp)?;
            model.actors.push(actor);
            model.actor_params.push(ap);
            model.critics.push(critic);
            model.critic_params.push(cp);
        }
        Ok(model)
    }

    /// Discards the critics; only the per-agent actors remain.
    pub fn into_policy(self) -> DecentralizedActors {
        DecentralizedActors {
            actors: self.actors,
            params: self.actor_params,
        }
    }
}

fn model_spec(c: &Checkpoint) -> Result<ModelSpec> {
    c.meta
        .get("model")
        .ok_or_else(|| Error::Format("checkpoint has no model description".into()))
        .and_then(|v| serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("model: {e}"))))
}

fn register_critic_zeros(critic: &CriticNet, store: &mut ParameterStore) -> Result<()> {
    match critic {
        CriticNet::Attention(c) => c.register_zeros(store),
        CriticNet::Mlp(c) => c.net().register_zeros(store),
    }
}

/// Execution-time policy: agent `i` acts on its own observation only.
#[derive(Debug, Clone)]
pub struct DecentralizedActors {
    actors: Vec<Actor>,
    params: Vec<ParameterStore>,
}

impl DecentralizedActors {
    pub fn new(actors: Vec<Actor>, params: Vec<ParameterStore>) -> Result<Self> {
        if actors.len() != params.len() {
            return Err(Error::Config("one parameter store per actor required".into()));
        }
        Ok(Self { actors, params })
    }

    /// Loads only the actors from a model checkpoint; critic arrays may be absent.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let spec = model_spec(c)?;
        let mut actors = Vec::with_capacity(spec.n_agents());
        let mut params = Vec::with_capacity(spec.n_agents());
        for i in 0..spec.n_agents() {
            let actor = spec.build_actor(i)?;
            let mut ap = ParameterStore::new();
            actor.net().register_zeros(&mut ap)?;
            c.load_into(&format!("agent{i}/actor/"), &mut ap)?;
            actors.push(actor);
            params.push(ap);
        }
        Ok(Self { actors, params })
    }

    pub fn n_agents(&self) -> usize {
        self.actors.len()
    }

    pub fn act_agent(&self, i: usize, obs: &[f64]) -> Result<Vec<f64>> {
        self.actors[i].act(&self.params[i], obs)
    }
}

impl JointPolicy for DecentralizedActors {
    fn act(&self, observation: &JointObservation) -> Result<JointAction> {
        if observation.n_agents() != self.actors.len() {
            return Err(Error::Shape(format!(
                "{} observations for {} actors",
                observation.n_agents(),
                self.actors.len()
            )));
        }
        (0..self.actors.len())
            .map(|i| self.act_agent(i, observation.agent(i)))
            .collect::<Result<Vec<_>>>()
            .map(JointAction)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Mean over steps of the agents' mean reward.
    pub mean_reward: f64,
    /// Mean critic loss of each agent over the episode's updates; `None` when no
    /// update ran (warmup).
    pub critic_losses: Vec<Option<f64>>,
    pub noise_scale: f64,
    /// Mean attention weight per head, averaged over agents and updates.
    pub head_weight_means: Vec<f64>,
}

/// Trains for `config.episodes` episodes. `on_episode` sees each log row as
/// soon as the episode ends.
pub fn train<E, F>(env: &mut E, config: &TrainConfig, seed: u64, mut on_episode: F) -> Result<MultiAgentTrainer>
where
    E: Environment + ?Sized,
    F: FnMut(&EpisodeLog) -> Result<()>,
{
    let mut trainer = MultiAgentTrainer::for_env(config.clone(), env, seed)?;
    let mut env_seeds = episode_seeds(seed);
    let n = trainer.agents.len();
    let anneal = config.anneal_episodes();
    for episode in 0..config.episodes {
        let env_seed = env_seeds.next().expect("endless seed stream");
        let noise = noise_schedule(episode, config.noise_start, config.noise_end, anneal);
        let mut obs = env.reset(env_seed);
        let mut reward_sum = 0.0;
        let mut steps = 0usize;
        let mut loss_sums = vec![0.0; n];
        let mut updates = 0usize;
        let mut head_sums: Vec<f64> = Vec::new();
        loop {
            let action = trainer.explore_actions(&obs, noise)?;
            let result = env.step(&action)?;
            trainer.replay.push(Transition {
                state: obs.concat(),
                action: action.concat(),
                rewards: result.rewards.clone(),
                next_state: result.observation.concat(),
                terminal: result.terminal,
                episode_seed: env_seed,
                step: steps as u32,
            });
            reward_sum += result.rewards.iter().sum::<f64>() / result.rewards.len() as f64;
            steps += 1;
            if trainer.replay.len() >= config.warmup {
                for (i, loss) in loss_sums.iter_mut().enumerate() {
                    let stats = trainer.update_agent(i)?;
                    *loss += stats.critic_loss;
                    if head_sums.is_empty() {
                        head_sums = vec![0.0; stats.head_weight_means.len()];
                    }
                    for (h, w) in head_sums.iter_mut().zip(&stats.head_weight_means) {
                        *h += w;
                    }
                }
                updates += 1;
            }
            if result.done {
                break;
            }
            obs = result.observation;
        }
        let row = EpisodeLog {
            episode,
            mean_reward: reward_sum / steps as f64,
            critic_losses: loss_sums
                .iter()
                .map(|l| (updates > 0).then(|| l / updates as f64))
                .collect(),
            noise_scale: noise,
            head_weight_means: head_sums.iter().map(|h| h / (updates * n) as f64).collect(),
        };
        on_episode(&row)?;
    }
    Ok(trainer)
}
