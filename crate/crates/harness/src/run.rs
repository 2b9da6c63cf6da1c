//! Multi-seed experiment execution, per-seed training logs and their aggregate.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use marl_core::env::{mean_shared_reward, rollout, Environment};
use marl_core::train::{episode_seeds, train, EpisodeLog};

use crate::config::ExperimentConfig;
use crate::envs::{baseline_policy, AnyEnv};
use crate::{HarnessError, Result};

/// Trailing window of the smoothed reward column.
pub const SMOOTHING_WINDOW: usize = 20;

pub fn seed_log_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.ckpt"))
}

pub fn replay_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.replay"))
}

pub fn aggregate_path(dir: &Path) -> PathBuf {
    dir.join("aggregate.csv")
}

/// Writes log rows as they arrive, flushing after each one.
struct LogWriter {
    out: csv::Writer<File>,
}

impl LogWriter {
    fn create(path: &Path, n_agents: usize) -> Result<Self> {
        let mut out = csv::Writer::from_path(path)?;
        let mut header = vec!["episode".to_string(), "mean_reward".to_string()];
        header.extend((0..n_agents).map(|i| format!("critic_loss_{i}")));
        header.push("noise_scale".into());
        out.write_record(&header)?;
        out.flush()?;
        Ok(Self { out })
    }

    fn write(&mut self, row: &EpisodeLog) -> Result<()> {
        let mut rec = vec![row.episode.to_string(), row.mean_reward.to_string()];
        rec.extend(row.critic_losses.iter().map(|l| l.map(|v| v.to_string()).unwrap_or_default()));
        rec.push(row.noise_scale.to_string());
        self.out.write_record(&rec)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Runs one seed and writes its log (plus optional checkpoint and replay
/// snapshot) into `dir`. Returns the per-episode mean rewards.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<f64>> {
    let mut env = AnyEnv::from_config(cfg)?;
    let n = env.n_agents();
    let mut log = LogWriter::create(&seed_log_path(dir, seed), n)?;
    let mut rewards = Vec::with_capacity(cfg.episodes);

    if cfg.algorithm.learner().is_none() {
        let policy = baseline_policy(cfg.algorithm, &env)?;
        for (episode, env_seed) in episode_seeds(seed).take(cfg.episodes).enumerate() {
            let steps = rollout(&mut env, policy.as_ref(), env_seed)?;
            let row = EpisodeLog {
                episode,
                mean_reward: mean_shared_reward(&steps),
                critic_losses: vec![None; n],
                noise_scale: 0.0,
                head_weight_means: Vec::new(),
            };
            log.write(&row)?;
            rewards.push(row.mean_reward);
        }
        return Ok(rewards);
    }

    let tc = cfg.train_config()?;
    let trainer = train(&mut env, &tc, seed, |row| {
        rewards.push(row.mean_reward);
        log.write(row)
            .map_err(|e| marl_core::Error::Io(std::io::Error::other(e.to_string())))
    })?;
    if cfg.save_checkpoint {
        let mut ckpt = trainer.export().to_checkpoint()?;
        ckpt.meta.insert("env".into(), cfg.env.name().into());
        ckpt.meta.insert("seed".into(), seed.into());
        ckpt.save(&checkpoint_path(dir, seed))?;
    }
    if cfg.save_replay {
        trainer.replay().save(&replay_path(dir, seed))?;
    }
    Ok(rewards)
}

/// Mean, sample standard deviation and trailing-window mean across seeds for
/// each episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
    pub smoothed_mean: f64,
    pub n_seeds: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates equally long per-seed reward series.
pub fn aggregate(per_seed: &[Vec<f64>]) -> Result<Vec<AggregateRow>> {
    let episodes = per_seed.first().map_or(0, Vec::len);
    if per_seed.iter().any(|r| r.len() != episodes) {
        return Err(HarnessError::Config("per-seed logs have different lengths".into()));
    }
    let mut rows: Vec<AggregateRow> = (0..episodes)
        .map(|e| {
            let col: Vec<f64> = per_seed.iter().map(|r| r[e]).collect();
            let (mean, std) = mean_std(&col);
            AggregateRow {
                episode: e,
                mean,
                std,
                smoothed_mean: 0.0,
                n_seeds: per_seed.len(),
            }
        })
        .collect();
    for e in 0..rows.len() {
        let lo = (e + 1).saturating_sub(SMOOTHING_WINDOW);
        let window = &rows[lo..=e];
        rows[e].smoothed_mean = window.iter().map(|r| r.mean).sum::<f64>() / window.len() as f64;
    }
    Ok(rows)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["episode", "mean_reward", "std_reward", "smoothed_mean_reward", "n_seeds"])?;
    for r in rows {
        out.write_record([
            r.episode.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.smoothed_mean.to_string(),
            r.n_seeds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the `mean_reward` column of a per-seed log.
pub fn read_seed_rewards(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "mean_reward")
        .ok_or_else(|| HarnessError::Config(format!("{} has no mean_reward column", path.display())))?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            rec[col]
                .parse::<f64>()
                .map_err(|e| HarnessError::Config(format!("{}: bad reward '{}': {e}", path.display(), &rec[col])))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub per_seed: Vec<(u64, Vec<f64>)>,
    pub aggregate: Vec<AggregateRow>,
}

impl RunSummary {
    /// Mean over the last `last` episodes of each seed.
    pub fn final_means(&self, last: usize) -> Vec<f64> {
        self.per_seed
            .iter()
            .map(|(_, r)| {
                let tail = &r[r.len().saturating_sub(last)..];
                tail.iter().sum::<f64>() / tail.len() as f64
            })
            .collect()
    }
}

/// Runs every seed, then aggregates from the per-seed files on disk.
///
/// With `cfg.parallel` and a `worker` executable, each seed runs as
/// `worker run-seed <config> --seed <s>` in its own process.
pub fn run_experiment(cfg: &ExperimentConfig, worker: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir)?;
    let config_copy = dir.join("config.toml");
    File::create(&config_copy)?.write_all(cfg.to_toml().as_bytes())?;

    match (cfg.parallel, worker) {
        (true, Some(exe)) => {
            let children = cfg
                .seeds
                .iter()
                .map(|s| {
                    Command::new(exe)
                        .arg("run-seed")
                        .arg(&config_copy)
                        .arg("--seed")
                        .arg(s.to_string())
                        .arg("--dir")
                        .arg(&dir)
                        .spawn()
                        .map(|c| (*s, c))
                })
                .collect::<std::io::Result<Vec<_>>>()?;
            let mut failed = Vec::new();
            for (s, mut child) in children {
                if !child.wait()?.success() {
                    failed.push(s);
                }
            }
            if !failed.is_empty() {
                return Err(HarnessError::Worker(format!("seeds {failed:?} failed")));
            }
        }
        _ => {
            for &s in &cfg.seeds {
                run_seed(cfg, s, &dir)?;
            }
        }
    }

    let per_seed = cfg
        .seeds
        .iter()
        .map(|&s| read_seed_rewards(&seed_log_path(&dir, s)).map(|r| (s, r)))
        .collect::<Result<Vec<_>>>()?;
    let series: Vec<Vec<f64>> = per_seed.iter().map(|(_, r)| r.clone()).collect();
    let rows = aggregate(&series)?;
    write_aggregate(&aggregate_path(&dir), &rows)?;
    Ok(RunSummary {
        output_dir: dir,
        per_seed,
        aggregate: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn smoothing_uses_a_trailing_window() {
        let series: Vec<f64> = (0..30).map(|e| e as f64).collect();
        let rows = aggregate(&[series]).unwrap();
        assert_eq!(rows[0].smoothed_mean, 0.0);
        assert_eq!(rows[3].smoothed_mean, 1.5);
        // Episodes 10..=29.
        assert_eq!(rows[29].smoothed_mean, 19.5);
    }

    #[test]
    fn ragged_logs_are_rejected() {
        assert!(aggregate(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
