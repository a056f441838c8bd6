use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hris_bench::config::{Experiment, ExperimentConfig, Profile};
use hris_bench::{experiments, plot, BenchError};
use hris_core::ppo::EpisodeLog;
use hris_core::HrisMode;

/// Experiments for the hybrid active-passive RIS optimizer.
#[derive(Parser)]
#[command(name = "hris-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a PPO agent; writes reward_<mode>.csv and checkpoint_<mode>.json.
    Train(Common),
    /// Compare a trained agent with the optimizer and the random baseline.
    Evaluate(Common),
    /// Mean SE versus the number of active elements, for every mode.
    SweepK(Common),
    /// Policy inference and optimizer solve times versus surface size.
    BenchRuntime(Common),
    /// Render result CSVs as SVG line charts.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Result CSV files.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON file overriding the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Surface mode: passive, fixed or dynamic.
    #[arg(long)]
    mode: Option<HrisMode>,
}

impl Common {
    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig, BenchError> {
        let mut cfg = ExperimentConfig::load(self.profile, self.config.as_deref())?;
        cfg.experiment = experiment;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn progress(total: usize) -> impl FnMut(&EpisodeLog) {
    let every = (total / 20).max(1);
    move |l: &EpisodeLog| {
        if (l.episode + 1) % every == 0 {
            eprintln!(
                "episode {:>7}  mean SE {:7.3} bps/Hz  clip {:.3}  kl {:.4}",
                l.episode + 1,
                l.mean_se,
                l.clip_fraction,
                l.kl_estimate
            );
        }
    }
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.resolve(Experiment::Train)?;
            let t = experiments::cmd_train(&cfg, &mut progress(cfg.episodes))?;
            let tail = &t.curve[t.curve.len().saturating_sub((t.curve.len() / 10).max(1))..];
            let mean = tail.iter().map(|l| l.mean_se).sum::<f64>() / tail.len() as f64;
            println!(
                "trained {} episodes ({} updates); final-10% mean SE {mean:.3} bps/Hz; config {}",
                t.curve.len(),
                t.updates_done,
                cfg.hash()
            );
        }
        Command::Evaluate(c) => {
            let cfg = c.resolve(Experiment::Evaluate)?;
            for r in experiments::cmd_evaluate(&cfg)? {
                println!("{:<14} {:<8} mean SE {:7.3} ± {:.3} bps/Hz over {} channels", r.method, r.mode, r.mean_se_bpshz, r.std_se_bpshz, r.n_channels);
            }
        }
        Command::SweepK(c) => {
            let cfg = c.resolve(Experiment::SweepK)?;
            let res = experiments::cmd_sweep_k(&cfg, &mut progress(cfg.episodes))?;
            let drl = res.drl.iter().flatten().map(|r| ("drl", r));
            for (method, r) in res.ao.iter().map(|r| ("ao-surrogate", r)).chain(drl) {
                println!("{method:<14} {:<8} K={:<3} mean SE {:7.3} bps/Hz", r.mode, r.k_active, r.mean_se_bpshz);
            }
        }
        Command::BenchRuntime(c) => {
            let cfg = c.resolve(Experiment::BenchRuntime)?;
            for r in experiments::cmd_bench_runtime(&cfg)? {
                println!("{:<14} N={:<4} median {:10.4} ms  ({} trials)", r.method, r.n_ris, r.median_ms, r.n_trials);
            }
        }
        Command::Plot { common, csv } => {
            let cfg = common.resolve(Experiment::Train)?;
            for p in plot::cmd_plot(&csv, &cfg.output_dir)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
