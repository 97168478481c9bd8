use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use stiffsim_core::harness::{self, HarnessConfig};

/// Stiffness discrimination simulator: virtual torsion springs, weighted
/// staircases and simulated observers.
#[derive(Debug, Parser)]
#[command(name = "stiffsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one seven-condition session.
    Run {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Session seed; defaults to the config's base_seed.
        #[arg(short, long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo batch of sessions.
    Batch {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Base seed; overrides the config.
        #[arg(short, long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Replicate count; overrides the config.
        #[arg(short = 'n', long)]
        replicates: Option<usize>,
    },
    /// Convert a trial log into a staircase trace CSV.
    Trace {
        /// trials.jsonl written by `run` or `batch`.
        log: PathBuf,
        /// Only this replicate.
        #[arg(short, long)]
        replicate: Option<u64>,
        /// Output file; stdout if omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and report every violation.
    Validate {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Print the effective configuration as TOML.
        #[arg(long)]
        print: bool,
    },
}

fn load(path: Option<&PathBuf>) -> Result<HarnessConfig> {
    match path {
        Some(p) => HarnessConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(HarnessConfig::default()),
    }
}

fn ensure_valid(config: &HarnessConfig) -> Result<()> {
    let violations = harness::validate_config(config);
    if violations.is_empty() {
        return Ok(());
    }
    for v in &violations {
        eprintln!("{v}");
    }
    bail!("{} configuration violation(s)", violations.len())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            ensure_valid(&cfg)?;
            let seed = seed.unwrap_or(cfg.base_seed);
            let (result, artifacts) = harness::run_single(&cfg, seed, &cfg.output_dir)?;
            for c in &result.conditions {
                match c.outcome.jnd() {
                    Some(j) => println!("{:<4} {:>4} trials  JND {:6.2}%", c.condition, c.trials, j.jnd_percent),
                    None => println!("{:<4} {:>4} trials  not converged", c.condition, c.trials),
                }
            }
            println!("wrote {}", artifacts.output_dir.display());
        }
        Command::Batch {
            config,
            seed,
            out,
            replicates,
        } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(n) = replicates {
                cfg.batch = n;
            }
            ensure_valid(&cfg)?;
            let (summary, artifacts) = harness::run_batch(&cfg)?;
            println!(
                "{} replicates, {} fully converged, {} with a non-converged staircase",
                summary.batch, summary.converged_replicates, summary.non_converged_replicates
            );
            for c in &summary.conditions {
                println!(
                    "{:<4} median JND {:>8}  mean {:>8}  sd {:>8}  non-converged {}",
                    c.condition,
                    fmt_opt(c.jnd_median),
                    fmt_opt(c.jnd_mean),
                    fmt_opt(c.jnd_sd),
                    c.non_converged
                );
            }
            if let Some(p) = summary.window_proportion_correct {
                println!(
                    "proportion correct in JND window {:.4} (equilibrium {:.4})",
                    p, summary.equilibrium_proportion
                );
            }
            println!("wrote {}", artifacts.output_dir.display());
        }
        Command::Trace { log, replicate, out } => {
            let lines = harness::read_log(&log)?;
            let text = harness::trace_from_log(&lines, replicate);
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Validate { config, print } => {
            let cfg = load(config.as_ref())?;
            if print {
                print!("{}", cfg.to_toml_string());
            }
            ensure_valid(&cfg)?;
            println!("ok");
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}%"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
