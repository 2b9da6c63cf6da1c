//! Noise-free rollout traces for plotting.

use std::path::Path;

use marl_core::env::{Environment, JointPolicy};
use marl_core::particle::WorldState;
use marl_core::train::TrainedModel;

use crate::envs::AnyEnv;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r.iter().map(f64::to_string))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Errors unless the model was trained on an environment with the same
/// observation and action layout as `env`.
pub fn check_compatible(model: &TrainedModel, env: &AnyEnv) -> Result<()> {
    if model.spec.obs_dims != env.observation_dims() || model.spec.action_spaces != env.action_spaces() {
        return Err(HarnessError::Incompatible(format!(
            "checkpoint expects observations {:?}, environment provides {:?}",
            model.spec.obs_dims,
            env.observation_dims()
        )));
    }
    Ok(())
}

fn header(env: &AnyEnv) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    match env {
        AnyEnv::Particle(e) => {
            let st = e.state();
            for i in 0..st.agent_positions.len() {
                h.extend([format!("agent{i}_x"), format!("agent{i}_y")]);
            }
            for i in 0..st.agent_positions.len() {
                h.extend([format!("agent{i}_vx"), format!("agent{i}_vy")]);
            }
            for j in 0..st.landmark_positions.len() {
                h.extend([format!("landmark{j}_x"), format!("landmark{j}_y")]);
            }
            if st.prey.is_some() {
                h.extend(["prey_x".to_string(), "prey_y".to_string()]);
            }
        }
        AnyEnv::Routing(e) => {
            let t = e.topology();
            for (i, d) in t.demands.iter().enumerate() {
                h.push(format!("demand_{}", d.id));
                for p in t.path_names(i) {
                    h.push(format!("split_{}_{p}", d.id));
                }
            }
            for l in 0..t.links.len() {
                h.push(format!("util_{}", t.link_name(l)));
            }
            h.push("mlu".into());
        }
    }
    h.push("reward".into());
    h
}

/// Rolls `policy` out for up to `steps` steps (or until the episode ends).
/// Particle rows hold the positions before the step and the velocities chosen;
/// routing rows hold the demands, the splits and the resulting utilizations.
pub fn trace_rollout(
    env: &mut AnyEnv,
    policy: &dyn JointPolicy,
    seed: u64,
    steps: usize,
    initial: Option<WorldState>,
) -> Result<Trace> {
    let mut obs = match (initial, &mut *env) {
        (Some(state), AnyEnv::Particle(e)) => e.reset_to(state, seed)?,
        (Some(_), AnyEnv::Routing(_)) => {
            return Err(HarnessError::Config("initial world states only apply to particle tasks".into()))
        }
        (None, e) => e.reset(seed),
    };
    let header = header(env);
    let mut rows = Vec::with_capacity(steps);
    for step in 0..steps {
        let action = policy.act(&obs)?;
        let mut row = vec![step as f64];
        if let AnyEnv::Particle(e) = &*env {
            let st = e.state();
            row.extend(st.agent_positions.iter().flatten());
            row.extend(action.0.iter().flatten());
            row.extend(st.landmark_positions.iter().flatten());
            if let Some(p) = &st.prey {
                row.extend(p.position);
            }
        }
        if let AnyEnv::Routing(e) = &*env {
            for (d, a) in e.state().demands.iter().zip(&action.0) {
                row.push(*d);
                row.extend(a);
            }
        }
        let result = env.step(&action)?;
        if let AnyEnv::Routing(e) = &*env {
            row.extend(e.state().latest_utilizations());
            row.push(result.info["mlu"]);
        }
        row.push(result.rewards.iter().sum::<f64>() / result.rewards.len() as f64);
        rows.push(row);
        if result.done {
            break;
        }
        obs = result.observation;
    }
    Ok(Trace { header, rows })
}
