use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use marl_core::checkpoint::Checkpoint;
use marl_core::env::JointPolicy;
use marl_core::train::TrainedModel;
use marl_harness::config::{AlgorithmKind, EnvKind, ExperimentConfig};
use marl_harness::envs::{baseline_policy, AnyEnv};
use marl_harness::{dump, run, trace, HarnessError, Result};

#[derive(Parser)]
#[command(name = "marl", about = "Train and analyse cooperative multi-agent policies")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every seed of an experiment and write per-seed and aggregate logs.
    Run { config: PathBuf },
    /// Check a configuration file without running it.
    Validate { config: PathBuf },
    /// Per-head Q-values and attention weights on replay samples.
    DumpAttention {
        checkpoint: PathBuf,
        replay: PathBuf,
        #[arg(long, default_value_t = 3000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        agent: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "attention.csv")]
        out: PathBuf,
    },
    /// Deterministic rollout of a checkpoint or a rule-based baseline.
    Trace {
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Use "wcmp" or "greedy" instead of a checkpoint.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
    },
    /// Run a single seed (used by parallel runs).
    #[command(hide = true)]
    RunSeed {
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        dir: PathBuf,
    },
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let exe = std::env::current_exe()?;
            let summary = run::run_experiment(&cfg, Some(&exe))?;
            let finals = summary.final_means(50);
            let (mean, std) = run::mean_std(&finals);
            println!(
                "{} on {}: {} seeds, final-50 reward {mean:.4} +/- {std:.4}; logs in {}",
                cfg.algorithm.name(),
                cfg.env.name(),
                cfg.seeds.len(),
                summary.output_dir.display()
            );
        }
        Cmd::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("ok: {} on {}, {} seeds", cfg.algorithm.name(), cfg.env.name(), cfg.seeds.len());
        }
        Cmd::DumpAttention {
            checkpoint,
            replay,
            n,
            agent,
            seed,
            out,
        } => {
            let d = dump::dump_attention_files(&checkpoint, &replay, n, agent, seed)?;
            d.write_csv(&out)?;
            println!("wrote {} rows to {}; mean weights {:?}", d.rows.len(), out.display(), d.mean_weights());
        }
        Cmd::Trace {
            checkpoint,
            env,
            seed,
            steps,
            baseline,
            out,
        } => {
            let kind = EnvKind::parse(&env)?;
            let cfg = ExperimentConfig {
                env: kind,
                ..ExperimentConfig::default()
            };
            let mut env = AnyEnv::from_config(&cfg)?;
            let policy: Box<dyn JointPolicy> = match (checkpoint, baseline.as_deref()) {
                (Some(path), None) => {
                    let model = TrainedModel::from_checkpoint(&Checkpoint::load(&path)?)?;
                    trace::check_compatible(&model, &env)?;
                    Box::new(model.into_policy())
                }
                (None, Some("wcmp")) => baseline_policy(AlgorithmKind::Wcmp, &env)?,
                (None, Some("greedy")) => baseline_policy(AlgorithmKind::Greedy, &env)?,
                (None, Some(other)) => {
                    return Err(HarnessError::Config(format!("baseline: unknown baseline '{other}'")))
                }
                _ => {
                    return Err(HarnessError::Config(
                        "trace needs exactly one of a checkpoint or --baseline".into(),
                    ))
                }
            };
            let t = trace::trace_rollout(&mut env, policy.as_ref(), seed, steps, None)?;
            t.write_csv(&out)?;
            println!("wrote {} steps to {}", t.rows.len(), out.display());
        }
        Cmd::RunSeed { config, seed, dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            run::run_seed(&cfg, seed, &dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
