//! Fixed-capacity experience replay with uniform sampling.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, NamedArray};
use crate::{Error, Result};

/// One joint transition. `state` and `next_state` are the concatenated
/// per-agent observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_state: Vec<f64>,
    /// The episode ended in a terminal state, so the next state is not
    /// bootstrapped. Reaching the horizon alone is not terminal.
    pub terminal: bool,
    /// Reset seed of the episode this tuple came from.
    pub episode_seed: u64,
    /// Step index within that episode.
    pub step: u32,
}

/// A sampled minibatch, one row per tuple.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    /// `(batch, n_agents)`.
    pub rewards: Array2<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 for terminal tuples.
    pub terminals: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot the next push overwrites once full.
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::new(),
            next: 0,
            rng,
        })
    }

    pub fn with_seed(capacity: usize, seed: u64) -> Result<Self> {
        Self::new(capacity, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Appends a tuple, evicting the oldest one when full.
    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Stored tuples from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, batch: usize) -> Result<Vec<usize>> {
        if batch == 0 {
            return Err(Error::Usage("batch size must be >= 1".into()));
        }
        if self.storage.is_empty() {
            return Err(Error::Usage("cannot sample from an empty replay buffer".into()));
        }
        let n = self.storage.len();
        Ok((0..batch).map(|_| self.rng.random_range(0..n)).collect())
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.storage[index]
    }

    pub fn sample(&mut self, batch: usize) -> Result<Batch> {
        let idx = self.sample_indices(batch)?;
        Ok(self.gather(&idx))
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let first = &self.storage[indices[0]];
        let (sd, ad, nr) = (first.state.len(), first.action.len(), first.rewards.len());
        let b = indices.len();
        let mut out = Batch {
            states: Array2::zeros((b, sd)),
            actions: Array2::zeros((b, ad)),
            rewards: Array2::zeros((b, nr)),
            next_states: Array2::zeros((b, sd)),
            terminals: Array1::zeros(b),
        };
        for (r, &i) in indices.iter().enumerate() {
            let t = &self.storage[i];
            out.states.row_mut(r).assign(&ndarray::aview1(&t.state));
            out.actions.row_mut(r).assign(&ndarray::aview1(&t.action));
            out.rewards.row_mut(r).assign(&ndarray::aview1(&t.rewards));
            out.next_states.row_mut(r).assign(&ndarray::aview1(&t.next_state));
            out.terminals[r] = if t.terminal { 1.0 } else { 0.0 };
        }
        out
    }

    /// Contents (oldest first) as a named-array container.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let n = self.storage.len();
        let mut c = Checkpoint::new();
        c.meta.insert("kind".into(), "replay".into());
        c.meta.insert("capacity".into(), self.capacity.into());
        c.meta.insert("len".into(), n.into());
        let Some(first) = self.storage.first() else {
            return c;
        };
        let dims = [first.state.len(), first.action.len(), first.rewards.len()];
        let mut cols: [Vec<f64>; 7] = Default::default();
        for t in self.iter() {
            cols[0].extend_from_slice(&t.state);
            cols[1].extend_from_slice(&t.action);
            cols[2].extend_from_slice(&t.rewards);
            cols[3].extend_from_slice(&t.next_state);
            cols[4].push(if t.terminal { 1.0 } else { 0.0 });
            // Seeds are stored as their bit pattern to survive the f64 payload.
            cols[5].push(f64::from_bits(t.episode_seed));
            cols[6].push(t.step as f64);
        }
        let names = ["states", "actions", "rewards", "next_states", "terminals", "episode_seeds", "steps"];
        let widths = [dims[0], dims[1], dims[2], dims[0], 1, 1, 1];
        for ((name, width), values) in names.into_iter().zip(widths).zip(cols) {
            c.arrays.push(NamedArray {
                name: name.into(),
                shape: vec![n, width],
                values,
            });
        }
        c
    }

    /// Rebuilds a buffer from [`ReplayBuffer::to_checkpoint`] output.
    pub fn from_checkpoint(c: &Checkpoint, rng: ChaCha8Rng) -> Result<Self> {
        let capacity = c
            .meta
            .get("capacity")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("replay snapshot lacks a capacity".into()))? as usize;
        let mut buf = Self::new(capacity, rng)?;
        let Some(states) = c.get("states") else {
            return Ok(buf);
        };
        let get = |name: &str| {
            c.get(name)
                .ok_or_else(|| Error::Format(format!("replay snapshot lacks '{name}'")))
        };
        let (actions, rewards, next_states) = (get("actions")?, get("rewards")?, get("next_states")?);
        let (terminals, seeds, steps) = (get("terminals")?, get("episode_seeds")?, get("steps")?);
        let n = states.shape[0];
        let row = |a: &NamedArray, r: usize| {
            let w = a.shape[1];
            a.values[r * w..(r + 1) * w].to_vec()
        };
        for a in [actions, rewards, next_states, terminals, seeds, steps] {
            if a.shape.len() != 2 || a.shape[0] != n {
                return Err(Error::Format(format!("replay array '{}' has {:?} rows, expected {n}", a.name, a.shape)));
            }
        }
        for r in 0..n {
            buf.push(Transition {
                state: row(states, r),
                action: row(actions, r),
                rewards: row(rewards, r),
                next_state: row(next_states, r),
                terminal: terminals.values[r] != 0.0,
                episode_seed: seeds.values[r].to_bits(),
                step: steps.values[r] as u32,
            });
        }
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path, rng: ChaCha8Rng) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?, rng)
    }
}
