//! The K-head attention critic.
//!
//! For agent `i` with joint observation `s`, own action `a_i` and teammate
//! actions `a_-i`:
//!
//! 1. a shared encoder maps `s` to a feature vector `e`;
//! 2. each of the K head networks maps `[e, a_i]` to a Q-vector `Q^k`
//!    (teammate actions never reach the heads);
//! 3. an embedding network maps `a_-i` to a query vector `h`;
//! 4. attention weights are `softmax_k(h . Q^k)`;
//! 5. the contextual Q-vector is `sum_k W^k Q^k`;
//! 6. a single linear output neuron turns it into the scalar Q-value.
//!
//! With [`HeadMerge::Uniform`] steps 3-4 are dropped and the heads are averaged
//! with fixed weights `1/K`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CriticLayout;
use crate::nn::{dot_score, softmax, softmax_backward, Mlp, MlpSpec, MlpTape, OutputActivation, ParameterStore};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionCriticConfig {
    pub k: usize,
    /// Width of the Q-vectors, the teammate embedding and the contextual vector.
    pub vec_dim: usize,
    pub obs_dims: Vec<usize>,
    pub act_dims: Vec<usize>,
    /// Index of the agent this critic belongs to.
    pub agent: usize,
    pub encoder_width: usize,
    pub head_hidden: usize,
    pub embed_hidden: usize,
}

impl AttentionCriticConfig {
    /// Defaults: 32-wide vectors and hidden layers.
    pub fn new(obs_dims: Vec<usize>, act_dims: Vec<usize>, agent: usize, k: usize) -> Self {
        Self {
            k,
            vec_dim: 32,
            obs_dims,
            act_dims,
            agent,
            encoder_width: 32,
            head_hidden: 32,
            embed_hidden: 32,
        }
    }

    pub fn layout(&self) -> CriticLayout {
        CriticLayout::new(self.obs_dims.clone(), self.act_dims.clone(), self.agent)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("attention critic needs K >= 2, got {}", self.k)));
        }
        if self.vec_dim == 0 || self.encoder_width == 0 || self.head_hidden == 0 || self.embed_hidden == 0 {
            return Err(Error::Config("attention critic widths must be >= 1".into()));
        }
        self.layout().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMerge {
    /// Dot-score attention between the teammate embedding and each head.
    Attention,
    /// Fixed `1/K` weights; no embedding network is instantiated.
    Uniform,
}

/// Every intermediate of one single-sample forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCriticOutput {
    pub head_qs: Vec<Vec<f64>>,
    /// Empty for [`HeadMerge::Uniform`].
    pub teammate_embedding: Vec<f64>,
    pub weights: Vec<f64>,
    pub contextual_q: Vec<f64>,
    pub scalar_q: f64,
}

/// Batched forward results, one row per sample.
#[derive(Debug, Clone)]
pub struct CriticBatchOutput {
    pub q: Array1<f64>,
    /// K matrices of shape `(batch, vec_dim)`.
    pub head_qs: Vec<Array2<f64>>,
    pub embedding: Option<Array2<f64>>,
    /// `(batch, K)`.
    pub weights: Array2<f64>,
    pub contextual: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionTape {
    enc: MlpTape,
    heads: Vec<MlpTape>,
    embed: Option<MlpTape>,
    out: MlpTape,
    batch: CriticBatchOutput,
}

impl AttentionTape {
    pub fn output(&self) -> &CriticBatchOutput {
        &self.batch
    }
}

/// Softmax over `h . Q^k` for each head.
pub fn attention_weights(h: &[f64], head_qs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let scores = head_qs
        .iter()
        .map(|q| dot_score(h, q))
        .collect::<Result<Vec<_>>>()?;
    softmax(&scores)
}

/// `sum_k weights[k] * head_qs[k]`.
pub fn contextual_q(weights: &[f64], head_qs: &[Vec<f64>]) -> Vec<f64> {
    let width = head_qs.first().map_or(0, Vec::len);
    let mut out = vec![0.0; width];
    for (w, q) in weights.iter().zip(head_qs) {
        for (o, v) in out.iter_mut().zip(q) {
            *o += w * v;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AttentionCritic {
    config: AttentionCriticConfig,
    layout: CriticLayout,
    merge: HeadMerge,
    encoder: Mlp,
    heads: Vec<Mlp>,
    embed: Option<Mlp>,
    scalar: Mlp,
}

impl AttentionCritic {
    pub fn new(config: AttentionCriticConfig, merge: HeadMerge) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let own = layout.own_action_dim();
        let teammates = layout.teammate_action_dim();
        if merge == HeadMerge::Attention && teammates == 0 {
            return Err(Error::Config("attention critic needs at least one teammate".into()));
        }
        let encoder = Mlp::new(
            MlpSpec::new(layout.state_dim(), vec![], config.encoder_width).with_output(OutputActivation::Relu),
            "enc.",
        )?;
        let heads = (0..config.k)
            .map(|k| {
                Mlp::new(
                    MlpSpec::new(config.encoder_width + own, vec![config.head_hidden], config.vec_dim),
                    format!("head{k}."),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let embed = match merge {
            HeadMerge::Attention => Some(Mlp::new(
                MlpSpec::new(teammates, vec![config.embed_hidden], config.vec_dim),
                "embed.",
            )?),
            HeadMerge::Uniform => None,
        };
        let scalar = Mlp::new(MlpSpec::new(config.vec_dim, vec![], 1), "out.")?;
        Ok(Self {
            config,
            layout,
            merge,
            encoder,
            heads,
            embed,
            scalar,
        })
    }

    pub fn config(&self) -> &AttentionCriticConfig {
        &self.config
    }

    pub fn layout(&self) -> &CriticLayout {
        &self.layout
    }

    pub fn merge(&self) -> HeadMerge {
        self.merge
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    fn networks(&self) -> impl Iterator<Item = &Mlp> {
        std::iter::once(&self.encoder)
            .chain(self.heads.iter())
            .chain(self.embed.iter())
            .chain(std::iter::once(&self.scalar))
    }

    pub fn register<R: Rng + ?Sized>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        for net in self.networks() {
            net.register(store, rng)?;
        }
        Ok(())
    }

    pub fn register_zeros(&self, store: &mut ParameterStore) -> Result<()> {
        for net in self.networks() {
            net.register_zeros(store)?;
        }
        Ok(())
    }

    pub fn head(&self, k: usize) -> &Mlp {
        &self.heads[k]
    }

    pub fn embedding_net(&self) -> Option<&Mlp> {
        self.embed.as_ref()
    }

    pub fn scalar_net(&self) -> &Mlp {
        &self.scalar
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::Config(format!("{what} has length {got}, expected {want}")));
        }
        Ok(())
    }

    /// K action-conditional Q-vectors from `(s, a_i)`.
    pub fn khead_forward(&self, params: &ParameterStore, state: &[f64], own_action: &[f64]) -> Result<Vec<Vec<f64>>> {
        Self::check_len("joint observation", state.len(), self.layout.state_dim())?;
        Self::check_len("own action", own_action.len(), self.layout.own_action_dim())?;
        let mut x = self.encoder.forward(params, state)?;
        x.extend_from_slice(own_action);
        self.heads.iter().map(|h| h.forward(params, &x)).collect()
    }

    /// The query vector computed from the concatenated teammate actions.
    pub fn teammate_embed(&self, params: &ParameterStore, teammate_actions: &[f64]) -> Result<Vec<f64>> {
        let net = self
            .embed
            .as_ref()
            .ok_or_else(|| Error::Unsupported("uniformly merged critic has no teammate embedding".into()))?;
        Self::check_len("teammate actions", teammate_actions.len(), self.layout.teammate_action_dim())?;
        net.forward(params, teammate_actions)
    }

    pub fn scalar_head(&self, params: &ParameterStore, contextual: &[f64]) -> Result<f64> {
        Ok(self.scalar.forward(params, contextual)?[0])
    }

    /// Applies the output neuron to each head vector separately.
    pub fn scalarize_heads(&self, params: &ParameterStore, head_qs: &[Vec<f64>]) -> Result<Vec<f64>> {
        head_qs.iter().map(|q| self.scalar_head(params, q)).collect()
    }

    /// Single-sample forward pass composed from the individual operations.
    pub fn critic_forward(
        &self,
        params: &ParameterStore,
        state: &[f64],
        own_action: &[f64],
        teammate_actions: &[f64],
    ) -> Result<AttentionCriticOutput> {
        let head_qs = self.khead_forward(params, state, own_action)?;
        let (teammate_embedding, weights) = match self.merge {
            HeadMerge::Attention => {
                let h = self.teammate_embed(params, teammate_actions)?;
                let w = attention_weights(&h, &head_qs)?;
                (h, w)
            }
            HeadMerge::Uniform => {
                Self::check_len("teammate actions", teammate_actions.len(), self.layout.teammate_action_dim())?;
                (Vec::new(), vec![1.0 / self.config.k as f64; self.config.k])
            }
        };
        let contextual = contextual_q(&weights, &head_qs);
        let scalar_q = self.scalar_head(params, &contextual)?;
        Ok(AttentionCriticOutput {
            head_qs,
            teammate_embedding,
            weights,
            contextual_q: contextual,
            scalar_q,
        })
    }

    /// Batched, recorded forward pass over joint states and joint actions.
    pub fn forward_batch(
        &self,
        params: &ParameterStore,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<AttentionTape> {
        self.run_batch(params, states, actions, true)
    }

    /// Scalar Q for each sample without recording anything for backward.
    pub fn evaluate_batch(
        &self,
        params: &ParameterStore,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        Ok(self.run_batch(params, states, actions, false)?.batch.q)
    }

    fn run_batch(
        &self,
        params: &ParameterStore,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        record: bool,
    ) -> Result<AttentionTape> {
        let run = |net: &Mlp, x: ArrayView2<f64>| -> Result<(Array2<f64>, MlpTape)> {
            if record {
                net.forward_recorded(params, x)
            } else {
                Ok((net.forward_batch(params, x)?, MlpTape::default()))
            }
        };
        self.layout.check_batch(&states, &actions)?;
        let b = states.nrows();
        let (enc_out, enc) = run(&self.encoder, states)?;
        let own = self.layout.own_actions(&actions);
        let x = concatenate(Axis(1), &[enc_out.view(), own.view()]).map_err(|e| Error::Shape(e.to_string()))?;
        let mut head_qs = Vec::with_capacity(self.config.k);
        let mut heads = Vec::with_capacity(self.config.k);
        for net in &self.heads {
            let (q, tape) = run(net, x.view())?;
            head_qs.push(q);
            heads.push(tape);
        }

        let k = self.config.k;
        let (embedding, embed, weights) = match &self.embed {
            Some(net) => {
                let mates = self.layout.teammate_actions(&actions);
                let (h, tape) = run(net, mates.view())?;
                let mut weights = Array2::zeros((b, k));
                let mut scores = vec![0.0; k];
                for r in 0..b {
                    let hr = h.row(r);
                    for (kk, q) in head_qs.iter().enumerate() {
                        scores[kk] = hr.dot(&q.row(r));
                    }
                    let w = softmax(&scores)?;
                    weights.row_mut(r).assign(&Array1::from(w));
                }
                (Some(h), Some(tape), weights)
            }
            None => (None, None, Array2::from_elem((b, k), 1.0 / k as f64)),
        };

        let mut contextual = Array2::zeros((b, self.config.vec_dim));
        for (kk, q) in head_qs.iter().enumerate() {
            let w = weights.column(kk).insert_axis(Axis(1));
            contextual += &(q * &w);
        }
        let (qmat, out) = run(&self.scalar, contextual.view())?;
        let q = qmat.column(0).to_owned();
        Ok(AttentionTape {
            enc,
            heads,
            embed,
            out,
            batch: CriticBatchOutput {
                q,
                head_qs,
                embedding,
                weights,
                contextual,
            },
        })
    }

    /// Backpropagates `dq` (one entry per sample). Returns gradients with respect
    /// to the joint states and joint actions; parameter gradients are accumulated
    /// into `params` only when `param_grads` is set.
    pub fn backward(
        &self,
        params: &mut ParameterStore,
        tape: &AttentionTape,
        dq: &Array1<f64>,
        param_grads: bool,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = &tape.batch;
        let b = out.q.len();
        if dq.len() != b {
            return Err(Error::Shape(format!("dq has {} rows, batch has {b}", dq.len())));
        }
        let backward = |net: &Mlp, params: &mut ParameterStore, t: &MlpTape, dy: ArrayView2<f64>| {
            if param_grads {
                net.backward(params, t, dy)
            } else {
                net.backward_inputs(params, t, dy)
            }
        };

        let dqm = dq.view().insert_axis(Axis(1));
        let dctx = backward(&self.scalar, params, &tape.out, dqm)?;

        let mut dheads: Vec<Array2<f64>> = (0..self.config.k)
            .map(|kk| {
                let w = out.weights.column(kk).insert_axis(Axis(1));
                &dctx * &w
            })
            .collect();

        let mut dmates = None;
        if let (Some(net), Some(h), Some(et)) = (&self.embed, &out.embedding, &tape.embed) {
            let k = self.config.k;
            let mut dh = Array2::zeros(h.dim());
            let mut dw = vec![0.0; k];
            for r in 0..b {
                let dc = dctx.row(r);
                for (kk, q) in out.head_qs.iter().enumerate() {
                    dw[kk] = dc.dot(&q.row(r));
                }
                let w: Vec<f64> = out.weights.row(r).to_vec();
                let ds = softmax_backward(&w, &dw);
                let hr = h.row(r);
                for kk in 0..k {
                    dheads[kk].row_mut(r).scaled_add(ds[kk], &hr);
                    dh.row_mut(r).scaled_add(ds[kk], &out.head_qs[kk].row(r));
                }
            }
            dmates = Some(backward(net, params, et, dh.view())?);
        }

        let enc_w = self.config.encoder_width;
        let mut dx = Array2::zeros((b, enc_w + self.layout.own_action_dim()));
        for (net, (t, dy)) in self.heads.iter().zip(tape.heads.iter().zip(&dheads)) {
            dx += &backward(net, params, t, dy.view())?;
        }
        let denc = dx.slice(s![.., ..enc_w]);
        let dstates = backward(&self.encoder, params, &tape.enc, denc)?;

        let mut dactions = Array2::zeros((b, self.layout.action_dim()));
        self.layout
            .scatter_own(&mut dactions, dx.slice(s![.., enc_w..]));
        if let Some(dm) = dmates {
            self.layout.scatter_teammates(&mut dactions, dm.view());
        }
        Ok((dstates, dactions))
    }

    pub fn kink_pattern(&self, tape: &AttentionTape, out: &mut Vec<bool>) {
        self.encoder.kink_pattern(&tape.enc, out);
        for (net, t) in self.heads.iter().zip(&tape.heads) {
            net.kink_pattern(t, out);
        }
        if let (Some(net), Some(t)) = (&self.embed, &tape.embed) {
            net.kink_pattern(t, out);
        }
    }
}
