//! Per-head Q-values and attention weights on tuples sampled from a replay
//! snapshot.
//!
//! Each head's Q-vector is passed through the critic's output neuron on its
//! own, giving one scalar per head alongside that head's attention weight.

use std::path::Path;

use marl_core::checkpoint::Checkpoint;
use marl_core::critic::{AttentionCritic, CriticNet, HeadMerge};
use marl_core::nn::ParameterStore;
use marl_core::train::{Algorithm, ReplayBuffer, TrainedModel};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    /// Index of the tuple in the replay snapshot, oldest first.
    pub index: usize,
    /// First 16 hex digits of SHA-256 over the state and joint action bytes.
    pub digest: String,
    pub head_q: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDump {
    pub agent: usize,
    pub k: usize,
    pub rows: Vec<DumpRow>,
}

impl AnalysisDump {
    /// Mean attention weight of each head over all rows.
    pub fn mean_weights(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for r in &self.rows {
            for (a, w) in m.iter_mut().zip(&r.weights) {
                *a += w;
            }
        }
        m.iter().map(|v| v / self.rows.len().max(1) as f64).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        let mut header = vec!["sample".to_string(), "replay_index".into(), "digest".into()];
        header.extend((0..self.k).map(|k| format!("q_head{k}")));
        header.extend((0..self.k).map(|k| format!("w_head{k}")));
        out.write_record(&header)?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![i.to_string(), r.index.to_string(), r.digest.clone()];
            rec.extend(r.head_q.iter().map(f64::to_string));
            rec.extend(r.weights.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn tuple_digest(state: &[f64], action: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in state.iter().chain(action) {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn attention_critic(model: &TrainedModel, agent: usize) -> Result<(&AttentionCritic, &ParameterStore)> {
    if model.spec.algorithm != Algorithm::AttMaddpg {
        return Err(HarnessError::Unsupported(format!(
            "attention dumps need an att_maddpg checkpoint, got {}",
            model.spec.algorithm.name()
        )));
    }
    if agent >= model.critics.len() {
        return Err(HarnessError::Config(format!(
            "agent {agent} out of range for {} agents",
            model.critics.len()
        )));
    }
    match &model.critics[agent] {
        CriticNet::Attention(c) if c.merge() == HeadMerge::Attention => Ok((c, &model.critic_params[agent])),
        _ => Err(HarnessError::Unsupported("checkpoint critic has no attention module".into())),
    }
}

/// Samples `n` distinct tuples (seeded) and evaluates agent `agent`'s critic on each.
pub fn dump_attention(
    model: &TrainedModel,
    replay: &ReplayBuffer,
    n: usize,
    agent: usize,
    seed: u64,
) -> Result<AnalysisDump> {
    let (critic, params) = attention_critic(model, agent)?;
    if n == 0 || n > replay.len() {
        return Err(HarnessError::Config(format!(
            "n: cannot sample {n} tuples from a replay of {}",
            replay.len()
        )));
    }
    let tuples: Vec<_> = replay.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = sample(&mut rng, tuples.len(), n).into_vec();
    indices.sort_unstable();
    let layout = critic.layout();
    let rows = indices
        .into_iter()
        .map(|index| {
            let t = tuples[index];
            if t.state.len() != layout.state_dim() || t.action.len() != layout.action_dim() {
                return Err(HarnessError::Incompatible(
                    "replay tuples do not match the checkpoint's dimensions".into(),
                ));
            }
            let (own, mates) = layout.split_actions(&t.action);
            let out = critic.critic_forward(params, &t.state, &own, &mates)?;
            Ok(DumpRow {
                index,
                digest: tuple_digest(&t.state, &t.action),
                head_q: critic.scalarize_heads(params, &out.head_qs)?,
                weights: out.weights,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisDump {
        agent,
        k: critic.k(),
        rows,
    })
}

/// File-level entry point: checkpoint and replay snapshot paths.
pub fn dump_attention_files(ckpt: &Path, replay: &Path, n: usize, agent: usize, seed: u64) -> Result<AnalysisDump> {
    let model = TrainedModel::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let replay = ReplayBuffer::load(replay, ChaCha8Rng::seed_from_u64(seed))?;
    dump_attention(&model, &replay, n, agent, seed)
}
