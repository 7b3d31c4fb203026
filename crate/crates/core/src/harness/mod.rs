//! Experiment harness: runs a configured scenario over its seeds and writes
//! traces and summaries.

pub mod compare;
pub mod config;
pub mod network_run;
pub mod record;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linear::run_linear_q;
use crate::mdp::{build_mdp, policy_iteration, ValueTable};
use crate::rng::{stream, Stream};
use crate::single_node::{EnvConfig, SingleNodeEnv, StateSpace};
use crate::tabular::{run_q_learning, IndexedEnv, LearningSchedule};

pub use compare::{compare_policies, Comparison};
pub use config::{ExperimentConfig, Scenario};
pub use network_run::{run_network, NetworkRunConfig, NetworkTrace};
pub use record::{RunRecord, RunSummary};

fn solve(env: &EnvConfig) -> Result<(ValueTable, StateSpace, crate::mdp::ExplicitMdp)> {
    let (mdp, space) = build_mdp(&env.global, &env.local, env.files, env.capacity, &env.weights, env.gamma)?;
    Ok((policy_iteration(&mdp)?, space, mdp))
}

/// Cost trace of the optimal policy on the seed's realization.
fn oracle_trace(env_cfg: &EnvConfig, seed: u64, steps: usize) -> Result<Vec<f64>> {
    let (table, space, _) = solve(env_cfg)?;
    let mut env = SingleNodeEnv::new(env_cfg.clone(), seed)?;
    (0..steps)
        .map(|_| {
            let a = table.policy[space.index(env.state())?];
            Ok(env.step(space.actions.get(a))?.cost)
        })
        .collect()
}

/// Runs one seed of `cfg`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    run_seed_inner(cfg, seed).map_err(|e| match e {
        e @ (Error::Run { .. } | Error::Config { .. } | Error::ConfigParse(_) | Error::Io { .. }) => e,
        e => Error::Run {
            seed,
            step: 0,
            source: Box::new(e),
        },
    })
}

fn run_seed_inner(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    let steps = cfg.steps;
    let record = match cfg.scenario {
        Scenario::SingleNodeTabular | Scenario::SingleNodeLinear | Scenario::SingleNodeOracle => {
            let env_cfg = cfg.env_config(seed)?;
            let gamma = env_cfg.gamma;
            let mut agent_rng = stream(seed, Stream::Agent);
            let record = match cfg.scenario {
                Scenario::SingleNodeTabular => {
                    let mut env = IndexedEnv::new(SingleNodeEnv::new(env_cfg.clone(), seed)?)?;
                    let schedule = LearningSchedule {
                        beta: cfg.tabular.beta,
                        epsilon: cfg.tabular.epsilon,
                    };
                    let (_, trace) = run_q_learning(&mut env, &schedule, gamma, steps, &mut agent_rng)?;
                    RunRecord::new(Some(seed), "tabular", trace)
                }
                Scenario::SingleNodeLinear => {
                    let mut env = SingleNodeEnv::new(env_cfg.clone(), seed)?;
                    let (_, trace) = run_linear_q(
                        &mut env,
                        &cfg.linear.steps(),
                        &cfg.linear.epsilon,
                        gamma,
                        steps,
                        &mut agent_rng,
                    )?;
                    RunRecord::new(Some(seed), "linear", trace)
                }
                _ => RunRecord::new(Some(seed), "oracle", oracle_trace(&env_cfg, seed, steps)?),
            };
            if cfg.scenario != Scenario::SingleNodeOracle && cfg.wants_oracle() {
                record.with_column("oracle", oracle_trace(&env_cfg, seed, steps)?)?
            } else {
                record
            }
        }
        Scenario::NetworkDqn | Scenario::NetworkBaselines => {
            let trace = run_network(&cfg.network_run()?, seed)?;
            let mut cols = trace.policies.into_iter().zip(trace.costs);
            let (name, cost) = cols.next().ok_or_else(|| Error::Internal("empty network trace".into()))?;
            let mut record = RunRecord::new(Some(seed), name, cost);
            for (n, v) in cols {
                record = record.with_column(n, v)?;
            }
            record
        }
    };
    Ok(record)
}

/// Per-seed records in seed order plus their step-wise mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub mean: RunRecord,
}

/// Runs every seed, in parallel on `threads` workers (all cores when `None`).
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let seeds = cfg.seed_list();
    let run = || {
        seeds
            .par_iter()
            .map(|&s| run_seed(cfg, s))
            .collect::<Result<Vec<_>>>()
    };
    let records = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let mean = RunRecord::mean_of(&records)?;
    Ok(ExperimentResult { records, mean })
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `seed-<s>.csv/.json` per seed plus `mean.csv` and `summary.json`
/// under `dir/<name>/`; returns the files written.
pub fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = cfg.run_name();
    let root = dir.join(&name);
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let hash = cfg.hash()?;
    let seeds = cfg.seed_list();
    let scenario = cfg.scenario.name();
    let mut written = Vec::new();
    for r in &result.records {
        let seed = r.seed.ok_or_else(|| Error::Internal("per-seed record without seed".into()))?;
        written.push(write(root.join(format!("seed-{seed}.csv")), &r.to_csv())?);
        let summary = RunSummary::of(r, &name, scenario, &seeds, &hash);
        written.push(write(
            root.join(format!("seed-{seed}.json")),
            &serde_json::to_string_pretty(&summary)?,
        )?);
    }
    written.push(write(root.join("mean.csv"), &result.mean.to_csv())?);
    let summary = RunSummary::of(&result.mean, &name, scenario, &seeds, &hash);
    written.push(write(root.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?);
    Ok(written)
}

/// Solves the single-node MDP of every seed and writes the value table and
/// both chains under `dir/<name>/`.
pub fn dump_oracle(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    if cfg.scenario.is_network() {
        return Err(Error::config("scenario", "oracle needs a single-node scenario"));
    }
    let root = dir.join(cfg.run_name());
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut written = Vec::new();
    for seed in cfg.seed_list() {
        let env = cfg.env_config(seed)?;
        let (table, _, mdp) = solve(&env)?;
        written.push(write(root.join(format!("oracle-seed-{seed}.json")), &table.to_json(&mdp)?)?);
        written.push(write(root.join(format!("global-chain-seed-{seed}.json")), &env.global.to_json()?)?);
        written.push(write(root.join(format!("local-chain-seed-{seed}.json")), &env.local.to_json()?)?);
    }
    Ok(written)
}

/// Loads CSV traces for comparison. The `cost` column of each file is named
/// after the `policy` of a sibling `.json` summary when one exists, else
/// after the file stem; clashing names are prefixed with the file stem.
pub fn load_series(paths: &[PathBuf]) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let summary = p.with_extension("json");
        let policy = fs::read_to_string(&summary)
            .ok()
            .and_then(|t| serde_json::from_str::<RunSummary>(&t).ok())
            .map(|s| s.policy)
            .unwrap_or_else(|| stem.clone());
        let rec = RunRecord::from_csv(&text, &policy)?;
        let mut push = |name: String, v: Vec<f64>| {
            let name = if out.iter().any(|(n, _)| *n == name) {
                format!("{stem}/{name}")
            } else {
                name
            };
            out.push((name, v));
        };
        push(rec.policy, rec.cost);
        for (n, v) in rec.columns {
            push(n, v);
        }
    }
    Ok(out)
}

/// Writes `compare.json`, `compare-samples.csv` and `compare-cdf.csv`.
pub fn write_comparison(c: &Comparison, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![
        write(dir.join("compare.json"), &serde_json::to_string_pretty(c)?)?,
        write(dir.join("compare-samples.csv"), &c.samples_csv())?,
        write(dir.join("compare-cdf.csv"), &c.cdf_csv())?,
    ])
}
