//! Adam updates and target-network soft updates.

use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one slot per scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamMoments {
    pub fn for_store(store: &ParameterStore) -> Self {
        let zeros = |s: &ParameterStore| s.entries().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros(store),
            v: zeros(store),
        }
    }
}

/// One Adam step with bias correction; `step_count` starts at 1.
///
/// Gradients are read, never cleared.
pub fn adam_step(
    params: &mut ParameterStore,
    moments: &mut AdamMoments,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    step_count: u64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    if step_count == 0 {
        return Err(Error::Config("adam step count starts at 1".into()));
    }
    if moments.m.len() != params.len()
        || moments.m.iter().zip(params.entries()).any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::Shape("adam moments do not match the parameter store".into()));
    }
    let (b1, b2) = betas;
    let t = step_count as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, m), v) in params
        .entries_mut()
        .iter_mut()
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        for i in 0..p.values.len() {
            let g = p.grads[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam optimizer bound to one parameter store's layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    moments: AdamMoments,
    steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParameterStore) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", config.lr)));
        }
        Ok(Self {
            config,
            moments: AdamMoments::for_store(store),
            steps: 0,
        })
    }

    pub fn step(&mut self, params: &mut ParameterStore) -> Result<()> {
        self.steps += 1;
        let c = self.config;
        adam_step(params, &mut self.moments, c.lr, (c.beta1, c.beta2), c.eps, self.steps)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut ParameterStore, online: &ParameterStore, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    target.check_same_layout(online)?;
    let keep = 1.0 - tau;
    for (t, o) in target.entries_mut().iter_mut().zip(online.entries()) {
        for (tv, ov) in t.values.iter_mut().zip(&o.values) {
            *tv = tau * ov + keep * *tv;
        }
    }
    Ok(())
}
