//! Fully connected feed-forward networks over row-major batches.
//!
//! Layer `l` of an [`Mlp`] with prefix `p` owns two store entries:
//! `"{p}l{l}.w"` with shape `[out, in]` and `"{p}l{l}.b"` with shape `[out]`.
//! Several networks can therefore live in one [`ParameterStore`] as long as
//! their prefixes differ.
//!
//! A recorded forward pass returns an [`MlpTape`]; [`Mlp::backward`] consumes it
//! and accumulates `d(output_grad . output)/d(params)` into the store's gradient
//! slots, returning the gradient with respect to the input rows.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Param, ParameterStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    /// Used by feature encoders whose output feeds further layers.
    Relu,
    Tanh,
    /// Row-wise softmax; the output lies on the probability simplex.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    /// Relu hidden layers and a linear output.
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Linear,
        }
    }

    pub fn with_hidden(mut self, act: HiddenActivation) -> Self {
        self.hidden_activation = act;
        self
    }

    pub fn with_output(mut self, act: OutputActivation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "all layer widths must be >= 1, got {} -> {:?} -> {}",
                self.input_dim, self.hidden_dims, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    pub fn num_scalars(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy)]
enum Act {
    Linear,
    Relu,
    Tanh,
    Softmax,
}

impl From<HiddenActivation> for Act {
    fn from(a: HiddenActivation) -> Self {
        match a {
            HiddenActivation::Relu => Act::Relu,
            HiddenActivation::Tanh => Act::Tanh,
        }
    }
}

impl From<OutputActivation> for Act {
    fn from(a: OutputActivation) -> Self {
        match a {
            OutputActivation::Linear => Act::Linear,
            OutputActivation::Relu => Act::Relu,
            OutputActivation::Tanh => Act::Tanh,
            OutputActivation::Softmax => Act::Softmax,
        }
    }
}

/// Recorded forward computation of one [`Mlp`] over a batch.
///
/// `activations[0]` is the input batch and `activations[l + 1]` the output of
/// layer `l`. Every supported activation's derivative can be recovered from its
/// output, so pre-activations are not kept.
#[derive(Debug, Clone, Default)]
pub struct MlpTape {
    activations: Vec<Array2<f64>>,
}

impl MlpTape {
    pub fn is_recorded(&self) -> bool {
        self.activations.len() > 1
    }

    pub fn output(&self) -> Option<&Array2<f64>> {
        self.activations.last()
    }

    pub fn batch_size(&self) -> usize {
        self.activations.first().map_or(0, |a| a.nrows())
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    prefix: String,
    acts: Vec<Act>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, prefix: impl Into<String>) -> Result<Self> {
        spec.validate()?;
        let mut acts: Vec<Act> = vec![spec.hidden_activation.into(); spec.hidden_dims.len()];
        acts.push(spec.output_activation.into());
        Ok(Self {
            spec,
            prefix: prefix.into(),
            acts,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}l{layer}.w", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}l{layer}.b", self.prefix)
    }

    /// Adds this network's entries, initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn register<R: Rng + ?Sized>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        for (l, (fan_in, fan_out)) in self.spec.layer_dims().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let b = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            store.insert(&self.weight_name(l), &[fan_out, fan_in], w)?;
            store.insert(&self.bias_name(l), &[fan_out], b)?;
        }
        Ok(())
    }

    /// Adds this network's entries with every weight and bias set to zero.
    pub fn register_zeros(&self, store: &mut ParameterStore) -> Result<()> {
        for (l, (fan_in, fan_out)) in self.spec.layer_dims().into_iter().enumerate() {
            store.insert_zeros(&self.weight_name(l), &[fan_out, fan_in])?;
            store.insert_zeros(&self.bias_name(l), &[fan_out])?;
        }
        Ok(())
    }

    /// Errors if any entry is missing or has the wrong shape.
    pub fn check_params(&self, store: &ParameterStore) -> Result<()> {
        for l in 0..self.spec.num_layers() {
            self.layer(store, l)?;
        }
        Ok(())
    }

    fn layer<'a>(
        &self,
        store: &'a ParameterStore,
        l: usize,
    ) -> Result<(ArrayView2<'a, f64>, ArrayView1<'a, f64>)> {
        let (fan_in, fan_out) = self.spec.layer_dims()[l];
        let w = store.expect(&self.weight_name(l), &[fan_out, fan_in])?;
        let b = store.expect(&self.bias_name(l), &[fan_out])?;
        let w = ArrayView2::from_shape((fan_out, fan_in), &w.values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok((w, ArrayView1::from(&b.values[..])))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Config(format!(
                "network '{}' expects input width {}, got {}",
                self.prefix,
                self.spec.input_dim,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Single-vector forward pass.
    pub fn forward(&self, store: &ParameterStore, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward_batch(store, x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch (one sample per row) without recording.
    pub fn forward_batch(&self, store: &ParameterStore, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut a = x.to_owned();
        for (l, act) in self.acts.iter().enumerate() {
            let (w, b) = self.layer(store, l)?;
            let mut z = a.dot(&w.t());
            z += &b;
            apply_activation(*act, &mut z);
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_recorded(
        &self,
        store: &ParameterStore,
        x: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, MlpTape)> {
        self.check_input(&x)?;
        let mut tape = MlpTape {
            activations: Vec::with_capacity(self.acts.len() + 1),
        };
        tape.activations.push(x.to_owned());
        for (l, act) in self.acts.iter().enumerate() {
            let (w, b) = self.layer(store, l)?;
            let mut z = tape.activations[l].dot(&w.t());
            z += &b;
            apply_activation(*act, &mut z);
            tape.activations.push(z);
        }
        let out = tape.activations[self.acts.len()].clone();
        Ok((out, tape))
    }

    fn check_tape(&self, tape: &MlpTape, dy: &ArrayView2<f64>) -> Result<()> {
        if !tape.is_recorded() {
            return Err(Error::Usage(format!(
                "backward on network '{}' without a recorded forward pass",
                self.prefix
            )));
        }
        if tape.activations.len() != self.acts.len() + 1 {
            return Err(Error::Usage(format!(
                "tape has {} layers, network '{}' has {}",
                tape.activations.len() - 1,
                self.prefix,
                self.acts.len()
            )));
        }
        let out = &tape.activations[self.acts.len()];
        if dy.dim() != out.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                dy.dim(),
                out.dim()
            )));
        }
        Ok(())
    }

    /// Accumulates parameter gradients into `store` and returns the input gradient.
    pub fn backward(
        &self,
        store: &mut ParameterStore,
        tape: &MlpTape,
        output_grad: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_tape(tape, &output_grad)?;
        let mut da = output_grad.to_owned();
        for l in (0..self.acts.len()).rev() {
            let dz = activation_backward(self.acts[l], &tape.activations[l + 1], da);
            let (fan_in, fan_out) = self.spec.layer_dims()[l];
            let wname = self.weight_name(l);
            let bname = self.bias_name(l);
            store.expect(&wname, &[fan_out, fan_in])?;
            store.expect(&bname, &[fan_out])?;

            let Param { values, grads, .. } = store.get_mut(&wname).expect("checked above");
            let w = ArrayView2::from_shape((fan_out, fan_in), &values[..])
                .map_err(|e| Error::Shape(e.to_string()))?;
            let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), &mut grads[..])
                .map_err(|e| Error::Shape(e.to_string()))?;
            general_mat_mul(1.0, &dz.t(), &tape.activations[l], 1.0, &mut gw);
            let dx = dz.dot(&w);

            let gb = &mut store.get_mut(&bname).expect("checked above").grads;
            let mut gb = ArrayViewMut1::from(&mut gb[..]);
            gb += &dz.sum_axis(Axis(0));
            da = dx;
        }
        Ok(da)
    }

    /// Input gradient only; parameter gradients are left untouched.
    pub fn backward_inputs(
        &self,
        store: &ParameterStore,
        tape: &MlpTape,
        output_grad: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_tape(tape, &output_grad)?;
        let mut da = output_grad.to_owned();
        for l in (0..self.acts.len()).rev() {
            let dz = activation_backward(self.acts[l], &tape.activations[l + 1], da);
            let (w, _) = self.layer(store, l)?;
            da = dz.dot(&w);
        }
        Ok(da)
    }

    /// On/off state of every relu unit in the recorded pass. Two passes with equal
    /// patterns lie on the same linear piece of the network.
    pub fn kink_pattern(&self, tape: &MlpTape, out: &mut Vec<bool>) {
        for (l, act) in self.acts.iter().enumerate() {
            if matches!(act, Act::Relu) {
                if let Some(a) = tape.activations.get(l + 1) {
                    out.extend(a.iter().map(|&v| v > 0.0));
                }
            }
        }
    }
}

fn apply_activation(act: Act, z: &mut Array2<f64>) {
    match act {
        Act::Linear => {}
        Act::Relu => z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 }),
        Act::Tanh => z.mapv_inplace(f64::tanh),
        Act::Softmax => {
            for mut row in z.rows_mut() {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
            }
        }
    }
}

fn activation_backward(act: Act, out: &Array2<f64>, mut da: Array2<f64>) -> Array2<f64> {
    match act {
        Act::Linear => {}
        Act::Relu => Zip::from(&mut da).and(out).for_each(|d, &y| {
            if y <= 0.0 {
                *d = 0.0;
            }
        }),
        Act::Tanh => Zip::from(&mut da).and(out).for_each(|d, &y| *d *= 1.0 - y * y),
        Act::Softmax => {
            for (mut drow, yrow) in da.rows_mut().into_iter().zip(out.rows()) {
                let dot = drow.dot(&yrow);
                Zip::from(&mut drow).and(&yrow).for_each(|d, &y| *d = y * (*d - dot));
            }
        }
    }
    da
}

/// Single-input forward pass of a network whose entries carry no name prefix.
pub fn mlp_forward(spec: &MlpSpec, params: &ParameterStore, input: &[f64]) -> Result<Vec<f64>> {
    Mlp::new(spec.clone(), "")?.forward(params, input)
}
