use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cachelearn::harness::compare::DEFAULT_SAMPLES;
use cachelearn::harness::config::OUT_DIR_ENV;
use cachelearn::harness::{self, ExperimentConfig};
use cachelearn::Result;

/// Caching experiments under Markov-modulated popularity.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-seed traces, the mean trace and summaries.
    Run {
        config: PathBuf,
        /// Comma-separated seeds replacing the configured ones.
        #[arg(long, value_delimiter = ',')]
        seed_override: Option<Vec<u64>>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare policies across CSV traces of equal length.
    Compare {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value = "no_cache")]
        reference: String,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Solve the single-node MDP and dump value tables and chains.
    Oracle {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seed_override: Option<Vec<u64>>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path, seeds: Option<Vec<u64>>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seeds {
        cfg.override_seeds(s);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn list(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed_override,
            out_dir,
            threads,
        } => {
            let cfg = load(&config, seed_override)?;
            let result = harness::run_experiment(&cfg, threads)?;
            let dir = cfg.output_dir(out_dir.as_deref());
            list(&harness::write_outputs(&cfg, &result, &dir)?);
        }
        Command::Compare {
            traces,
            reference,
            samples,
            seed,
            out_dir,
        } => {
            let series = harness::load_series(&traces)?;
            let c = harness::compare_policies(&series, &reference, samples, seed)?;
            let dir = out_dir
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .or_else(|| traces[0].parent().map(Path::to_path_buf))
                .unwrap_or_default();
            for s in &c.stats {
                println!("{:<24} mean {:>14.6} reduced {:>14.6}", s.policy, s.mean_cost, s.mean_reduced_cost);
            }
            if c.noncausal_dominates == Some(false) {
                eprintln!("warning: noncausal does not have the largest mean reduction");
            }
            list(&harness::write_comparison(&c, &dir)?);
        }
        Command::Oracle {
            config,
            seed_override,
            out_dir,
        } => {
            let cfg = load(&config, seed_override)?;
            let dir = cfg.output_dir(out_dir.as_deref());
            list(&harness::dump_oracle(&cfg, &dir)?);
        }
        Command::Validate { config } => {
            let cfg = load(&config, None)?;
            println!(
                "ok: {} ({}, {} seeds, {} steps)",
                cfg.run_name(),
                cfg.scenario.name(),
                cfg.seed_list().len(),
                cfg.steps
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
