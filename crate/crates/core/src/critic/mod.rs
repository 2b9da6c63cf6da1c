//! Centralized critics: the K-head attention critic, its uniform-merge ablation,
//! and plain MLP critics over the joint (or local) state and action.

pub mod attention;

use std::ops::Range;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Mlp, MlpSpec, MlpTape, ParameterStore};
use crate::{Error, Result};

pub use attention::{
    attention_weights, contextual_q, AttentionCritic, AttentionCriticConfig, AttentionCriticOutput,
    AttentionTape, CriticBatchOutput, HeadMerge,
};

/// Where each agent's observation and action live inside the concatenated
/// joint vectors, seen from one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticLayout {
    pub obs_dims: Vec<usize>,
    pub act_dims: Vec<usize>,
    pub agent: usize,
}

fn offsets(dims: &[usize], i: usize) -> Range<usize> {
    let start: usize = dims[..i].iter().sum();
    start..start + dims[i]
}

impl CriticLayout {
    pub fn new(obs_dims: Vec<usize>, act_dims: Vec<usize>, agent: usize) -> Self {
        Self {
            obs_dims,
            act_dims,
            agent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dims.is_empty() || self.obs_dims.len() != self.act_dims.len() {
            return Err(Error::Config(format!(
                "{} observation dims but {} action dims",
                self.obs_dims.len(),
                self.act_dims.len()
            )));
        }
        if self.agent >= self.obs_dims.len() {
            return Err(Error::Config(format!(
                "agent {} out of range for {} agents",
                self.agent,
                self.obs_dims.len()
            )));
        }
        if self.obs_dims.iter().chain(&self.act_dims).any(|&d| d == 0) {
            return Err(Error::Config("observation and action dims must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.obs_dims.len()
    }

    pub fn state_dim(&self) -> usize {
        self.obs_dims.iter().sum()
    }

    pub fn action_dim(&self) -> usize {
        self.act_dims.iter().sum()
    }

    pub fn obs_range(&self, i: usize) -> Range<usize> {
        offsets(&self.obs_dims, i)
    }

    pub fn action_range(&self, i: usize) -> Range<usize> {
        offsets(&self.act_dims, i)
    }

    pub fn own_action_dim(&self) -> usize {
        self.act_dims[self.agent]
    }

    pub fn teammate_action_dim(&self) -> usize {
        self.action_dim() - self.own_action_dim()
    }

    /// Joint action columns of every teammate, in agent order.
    pub fn teammate_columns(&self) -> Vec<usize> {
        let own = self.action_range(self.agent);
        (0..self.action_dim()).filter(|c| !own.contains(c)).collect()
    }

    /// Splits a joint action vector into `(a_i, a_-i)`.
    pub fn split_actions(&self, joint: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let own = self.action_range(self.agent);
        let mates = self.teammate_columns().into_iter().map(|c| joint[c]).collect();
        (joint[own].to_vec(), mates)
    }

    pub fn check_batch(&self, states: &ArrayView2<f64>, actions: &ArrayView2<f64>) -> Result<()> {
        if states.ncols() != self.state_dim() || actions.ncols() != self.action_dim() {
            return Err(Error::Shape(format!(
                "critic expects {} state and {} action columns, got {} and {}",
                self.state_dim(),
                self.action_dim(),
                states.ncols(),
                actions.ncols()
            )));
        }
        if states.nrows() != actions.nrows() {
            return Err(Error::Shape(format!(
                "{} state rows but {} action rows",
                states.nrows(),
                actions.nrows()
            )));
        }
        Ok(())
    }

    pub fn own_actions(&self, actions: &ArrayView2<f64>) -> Array2<f64> {
        let r = self.action_range(self.agent);
        actions.slice(s![.., r]).to_owned()
    }

    pub fn teammate_actions(&self, actions: &ArrayView2<f64>) -> Array2<f64> {
        actions.select(Axis(1), &self.teammate_columns())
    }

    pub fn scatter_own(&self, target: &mut Array2<f64>, grads: ArrayView2<f64>) {
        let r = self.action_range(self.agent);
        target.slice_mut(s![.., r]).assign(&grads);
    }

    pub fn scatter_teammates(&self, target: &mut Array2<f64>, grads: ArrayView2<f64>) {
        for (j, c) in self.teammate_columns().into_iter().enumerate() {
            target.column_mut(c).assign(&grads.column(j));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticInputs {
    /// All observations and all actions.
    Joint,
    /// Only the agent's own observation and action.
    Local,
}

/// A single MLP mapping the (joint or local) state-action vector to a Q-value.
#[derive(Debug, Clone)]
pub struct MlpCritic {
    layout: CriticLayout,
    inputs: CriticInputs,
    net: Mlp,
}

impl MlpCritic {
    pub fn new(layout: CriticLayout, inputs: CriticInputs, hidden: Vec<usize>) -> Result<Self> {
        layout.validate()?;
        let input_dim = match inputs {
            CriticInputs::Joint => layout.state_dim() + layout.action_dim(),
            CriticInputs::Local => layout.obs_dims[layout.agent] + layout.own_action_dim(),
        };
        let net = Mlp::new(MlpSpec::new(input_dim, hidden, 1), "q.")?;
        Ok(Self { layout, inputs, net })
    }

    pub fn layout(&self) -> &CriticLayout {
        &self.layout
    }

    pub fn inputs(&self) -> CriticInputs {
        self.inputs
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn input_matrix(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        let joined = match self.inputs {
            CriticInputs::Joint => concatenate(Axis(1), &[states, actions]),
            CriticInputs::Local => {
                let o = self.layout.obs_range(self.layout.agent);
                let a = self.layout.action_range(self.layout.agent);
                concatenate(Axis(1), &[states.slice(s![.., o]), actions.slice(s![.., a])])
            }
        };
        joined.map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn forward_batch(
        &self,
        params: &ParameterStore,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, MlpTape)> {
        self.layout.check_batch(&states, &actions)?;
        let x = self.input_matrix(states, actions)?;
        let (y, tape) = self.net.forward_recorded(params, x.view())?;
        Ok((y.column(0).to_owned(), tape))
    }

    pub fn evaluate_batch(
        &self,
        params: &ParameterStore,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        self.layout.check_batch(&states, &actions)?;
        let x = self.input_matrix(states, actions)?;
        Ok(self.net.forward_batch(params, x.view())?.column(0).to_owned())
    }

    pub fn backward(
        &self,
        params: &mut ParameterStore,
        tape: &MlpTape,
        dq: &Array1<f64>,
        param_grads: bool,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let dy = dq.view().insert_axis(Axis(1));
        let dx = if param_grads {
            self.net.backward(params, tape, dy)?
        } else {
            self.net.backward_inputs(params, tape, dy)?
        };
        let b = dx.nrows();
        let sd = self.layout.state_dim();
        match self.inputs {
            CriticInputs::Joint => Ok((dx.slice(s![.., ..sd]).to_owned(), dx.slice(s![.., sd..]).to_owned())),
            CriticInputs::Local => {
                let o = self.layout.obs_range(self.layout.agent);
                let a = self.layout.action_range(self.layout.agent);
                let od = o.len();
                let mut ds = Array2::zeros((b, sd));
                let mut da = Array2::zeros((b, self.layout.action_dim()));
                ds.slice_mut(s![.., o]).assign(&dx.slice(s![.., ..od]));
                da.slice_mut(s![.., a]).assign(&dx.slice(s![.., od..]));
                Ok((ds, da))
            }
        }
    }
}

/// Any of the critics used by the trainer.
#[derive(Debug, Clone)]
pub enum CriticNet {
    Attention(AttentionCritic),
    Mlp(MlpCritic),
}

#[derive(Debug, Clone)]
pub enum CriticTape {
    Attention(AttentionTape),
    Mlp(MlpTape),
}

/// Gradients of the critic output with respect to its inputs.
#[derive(Debug, Clone)]
pub struct CriticInputGrads {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
}

impl CriticNet {
    pub fn layout(&self) -> &CriticLayout {
        match self {
            CriticNet::Attention(c) => c.layout(),
            CriticNet::Mlp(c) => c.layout(),
        }
    }

    pub fn register<R: Rng + ?Sized>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        match self {
            CriticNet::Attention(c) => c.register(store, rng),
            CriticNet::Mlp(c) => c.net().register(store, rng),
        }
    }

    /// Q-values for a batch, plus the tape for a later [`CriticNet::backward`].
    pub fn forward(
        &self,
        params: &ParameterStore,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, CriticTape)> {
        match self {
            CriticNet::Attention(c) => {
                let tape = c.forward_batch(params, states, actions)?;
                Ok((tape.output().q.clone(), CriticTape::Attention(tape)))
            }
            CriticNet::Mlp(c) => {
                let (q, tape) = c.forward_batch(params, states, actions)?;
                Ok((q, CriticTape::Mlp(tape)))
            }
        }
    }

    pub fn evaluate(
        &self,
        params: &ParameterStore,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        match self {
            CriticNet::Attention(c) => c.evaluate_batch(params, states, actions),
            CriticNet::Mlp(c) => c.evaluate_batch(params, states, actions),
        }
    }

    pub fn backward(
        &self,
        params: &mut ParameterStore,
        tape: &CriticTape,
        dq: &Array1<f64>,
        param_grads: bool,
    ) -> Result<CriticInputGrads> {
        let (states, actions) = match (self, tape) {
            (CriticNet::Attention(c), CriticTape::Attention(t)) => c.backward(params, t, dq, param_grads)?,
            (CriticNet::Mlp(c), CriticTape::Mlp(t)) => c.backward(params, t, dq, param_grads)?,
            _ => return Err(Error::Usage("critic tape belongs to a different critic kind".into())),
        };
        Ok(CriticInputGrads { states, actions })
    }

    pub fn kink_pattern(&self, tape: &CriticTape, out: &mut Vec<bool>) {
        match (self, tape) {
            (CriticNet::Attention(c), CriticTape::Attention(t)) => c.kink_pattern(t, out),
            (CriticNet::Mlp(c), CriticTape::Mlp(t)) => c.net().kink_pattern(t, out),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> CriticLayout {
        CriticLayout::new(vec![3, 2, 4], vec![2, 3, 1], 1)
    }

    #[test]
    fn layout_ranges() {
        let l = layout();
        assert_eq!(l.state_dim(), 9);
        assert_eq!(l.action_range(1), 2..5);
        assert_eq!(l.teammate_columns(), vec![0, 1, 5]);
        let (own, mates) = l.split_actions(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(own, vec![2.0, 3.0, 4.0]);
        assert_eq!(mates, vec![0.0, 1.0, 5.0]);
        assert!(CriticLayout::new(vec![1], vec![1, 1], 0).validate().is_err());
        assert!(CriticLayout::new(vec![1, 1], vec![1, 1], 2).validate().is_err());
    }

    fn critics() -> Vec<CriticNet> {
        let att = AttentionCriticConfig {
            vec_dim: 5,
            encoder_width: 4,
            head_hidden: 4,
            embed_hidden: 3,
            ..AttentionCriticConfig::new(vec![3, 2, 4], vec![2, 3, 1], 1, 3)
        };
        vec![
            CriticNet::Attention(AttentionCritic::new(att.clone(), HeadMerge::Attention).unwrap()),
            CriticNet::Attention(AttentionCritic::new(att, HeadMerge::Uniform).unwrap()),
            CriticNet::Mlp(MlpCritic::new(layout(), CriticInputs::Joint, vec![6, 6]).unwrap()),
            CriticNet::Mlp(MlpCritic::new(layout(), CriticInputs::Local, vec![6]).unwrap()),
        ]
    }

    #[test]
    fn evaluate_matches_recorded_forward() {
        for (n, critic) in critics().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + n as u64);
            let mut p = ParameterStore::new();
            critic.register(&mut p, &mut rng).unwrap();
            let s = Array2::from_shape_fn((5, 9), |_| rng.random_range(-1.0..1.0));
            let a = Array2::from_shape_fn((5, 6), |_| rng.random_range(-1.0..1.0));
            let (q, _) = critic.forward(&p, s.view(), a.view()).unwrap();
            assert_eq!(critic.evaluate(&p, s.view(), a.view()).unwrap(), q, "critic {n}");
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        for (n, critic) in critics().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let mut p = ParameterStore::new();
            critic.register(&mut p, &mut rng).unwrap();
            let s = Array2::from_shape_fn((4, 9), |_| rng.random_range(-1.0..1.0));
            let a = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
            let g = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
            let (_, tape) = critic.forward(&p, s.view(), a.view()).unwrap();
            critic.backward(&mut p, &tape, &g, true).unwrap();
            let report = finite_difference_check(&mut p, 60, 1e-6, &mut rng, |p| {
                let (q, tape) = critic.forward(p, s.view(), a.view())?;
                let mut pat = Vec::new();
                critic.kink_pattern(&tape, &mut pat);
                Ok((q.dot(&g), pat))
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-5, "critic {n}: {report:?}");
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        for (n, critic) in critics().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + n as u64);
            let mut p = ParameterStore::new();
            critic.register(&mut p, &mut rng).unwrap();
            let s = Array2::from_shape_fn((1, 9), |_| rng.random_range(-1.0..1.0));
            let a = Array2::from_shape_fn((1, 6), |_| rng.random_range(-1.0..1.0));
            let (_, tape) = critic.forward(&p, s.view(), a.view()).unwrap();
            let grads = critic.backward(&mut p, &tape, &Array1::ones(1), false).unwrap();
            assert!(p.grad_norm() == 0.0, "input-only backward touched parameter grads");
            let eps = 1e-6;
            for c in 0..6 {
                let (mut ap, mut am) = (a.clone(), a.clone());
                ap[[0, c]] += eps;
                am[[0, c]] -= eps;
                let (qp, tp) = critic.forward(&p, s.view(), ap.view()).unwrap();
                let (qm, tm) = critic.forward(&p, s.view(), am.view()).unwrap();
                let (mut k1, mut k2) = (Vec::new(), Vec::new());
                critic.kink_pattern(&tp, &mut k1);
                critic.kink_pattern(&tm, &mut k2);
                if k1 != k2 {
                    continue;
                }
                let fd = (qp[0] - qm[0]) / (2.0 * eps);
                let an = grads.actions[[0, c]];
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "critic {n} col {c}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn local_critic_ignores_teammates() {
        let c = MlpCritic::new(layout(), CriticInputs::Local, vec![4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParameterStore::new();
        c.net().register(&mut p, &mut rng).unwrap();
        let s = Array2::from_shape_fn((2, 9), |_| rng.random_range(-1.0..1.0));
        let a = Array2::from_shape_fn((2, 6), |_| rng.random_range(-1.0..1.0));
        let mut a2 = a.clone();
        a2[[0, 0]] = 5.0;
        a2[[1, 5]] = -5.0;
        let mut s2 = s.clone();
        s2[[0, 0]] = 7.0;
        let (q1, _) = c.forward_batch(&p, s.view(), a.view()).unwrap();
        let (q2, _) = c.forward_batch(&p, s2.view(), a2.view()).unwrap();
        assert_eq!(q1, q2);
    }

    #[test]
    fn mismatched_tape_is_a_usage_error() {
        let cs = critics();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParameterStore::new();
        cs[2].register(&mut p, &mut rng).unwrap();
        let s = Array2::zeros((1, 9));
        let a = Array2::zeros((1, 6));
        let (_, tape) = cs[2].forward(&p, s.view(), a.view()).unwrap();
        assert!(matches!(
            cs[0].backward(&mut p, &tape, &Array1::ones(1), true),
            Err(Error::Usage(_))
        ));
    }
}
