use std::fs;

use cachelearn::harness::{
    compare_policies, load_series, run_experiment, write_outputs, ExperimentConfig, RunRecord, RunSummary,
};
use cachelearn::single_node::CostWeights;
use cachelearn::Error;

const SMALL: &str = r#"
scenario = "single-node-tabular"
steps = 10
seeds = [0, 1]
name = "small"

[single_node]
files = 10
capacity = 2
preset = "s1"
global_etas = [1.0, 1.5]
local_etas = [0.7, 2.5]
"#;

#[test]
fn two_seeds_give_two_records_and_a_mean() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    assert_eq!(cfg.weights().unwrap(), CostWeights::new(10.0, 600.0, 1000.0).unwrap());
    let result = run_experiment(&cfg, Some(1)).unwrap();
    assert_eq!(result.records.len(), 2);
    assert_eq!(result.records[0].seed, Some(0));
    assert_eq!(result.records[1].seed, Some(1));
    assert_eq!(result.mean.steps(), 10);
    assert!(result.records.iter().all(|r| r.column("oracle").is_some()));
    for t in 0..10 {
        let m = (result.records[0].cost[t] + result.records[1].cost[t]) / 2.0;
        assert_eq!(result.mean.cost[t], m);
    }
}

#[test]
fn outputs_match_their_headers_and_carry_the_hash() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&cfg, None).unwrap();
    let files = write_outputs(&cfg, &result, dir.path()).unwrap();
    assert_eq!(files.len(), 2 * 2 + 2);
    for f in files.iter().filter(|f| f.extension().unwrap() == "csv") {
        let text = fs::read_to_string(f).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,cost,run_mean,oracle");
        assert_eq!(lines.len(), 11);
        assert!(lines.iter().all(|l| l.split(',').count() == 4));
    }
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("small/seed-1.json")).unwrap()).unwrap();
    assert_eq!(summary.seed, Some(1));
    assert_eq!(summary.config_hash, cfg.hash().unwrap());
    assert_eq!(summary.policy, "tabular");
    assert_eq!(summary.steps, 10);
}

#[test]
fn thread_count_does_not_change_results() {
    let mut cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    cfg.steps = 500;
    cfg.override_seeds(vec![4, 5, 6]);
    let a = run_experiment(&cfg, Some(1)).unwrap();
    let b = run_experiment(&cfg, Some(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mean.to_csv(), b.mean.to_csv());
}

#[test]
fn every_scenario_runs() {
    let linear = SMALL.replace("single-node-tabular", "single-node-linear");
    let oracle = SMALL.replace("single-node-tabular", "single-node-oracle");
    for (text, policy, cols) in [(linear, "linear", 1), (oracle, "oracle", 0)] {
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let r = run_experiment(&cfg, None).unwrap();
        assert_eq!(r.records[0].policy, policy);
        assert_eq!(r.records[0].columns.len(), cols);
    }
    let net = r#"
scenario = "network-baselines"
steps = 8
seeds = [0]

[network]
leaves = 3
files = 12
parent_capacity = 3
leaf_capacity = 2
"#;
    let cfg = ExperimentConfig::from_toml_str(net).unwrap();
    let r = run_experiment(&cfg, None).unwrap();
    assert_eq!(r.records[0].policy, "lru");
    let names: Vec<&str> = r.records[0].columns.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["lfu", "fifo", "noncausal", "no_cache"]);
    let dqn = format!("{}\n[dqn]\ngroups = 2\nbatch_size = 4\n", net.replace("network-baselines", "network-dqn"));
    let cfg = ExperimentConfig::from_toml_str(&dqn).unwrap();
    let r = run_experiment(&cfg, None).unwrap();
    assert_eq!(r.records[0].policy, "dqn");
    assert_eq!(r.mean.steps(), 8);
}

#[test]
fn compare_against_written_traces() {
    let net = r#"
scenario = "network-baselines"
steps = 300
seeds = [2]
name = "net"

[network]
leaves = 4
files = 20
parent_capacity = 4
leaf_capacity = 2
"#;
    let cfg = ExperimentConfig::from_toml_str(net).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&cfg, None).unwrap();
    write_outputs(&cfg, &result, dir.path()).unwrap();
    let series = load_series(&[dir.path().join("net/seed-2.csv")]).unwrap();
    assert_eq!(series[0].0, "lru");
    let c = compare_policies(&series, "no_cache", 100, 0).unwrap();
    let reference = c.stats.iter().position(|s| s.policy == "no_cache").unwrap();
    assert!(c.sampled[reference].iter().all(|&v| v == 0.0));
    assert_eq!(c.noncausal_dominates, Some(true));
    let cdf = c.cdf_csv();
    for policy in ["lru", "noncausal"] {
        let probs: Vec<f64> = cdf
            .lines()
            .filter(|l| l.starts_with(&format!("{policy},")))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(probs.first(), Some(&0.0));
        assert_eq!(probs.last(), Some(&1.0));
        assert!(probs.windows(2).all(|w| w[0] <= w[1]));
    }
    let short = RunRecord::new(None, "x", vec![1.0; 10]);
    let mut bad = series.clone();
    bad.push((short.policy, short.cost));
    assert!(matches!(compare_policies(&bad, "no_cache", 100, 0), Err(Error::Misaligned(_))));
}

#[test]
fn pinned_chains_are_loaded_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let env = cfg.env_config(9).unwrap();
    fs::write(dir.path().join("g.json"), env.global.to_json().unwrap()).unwrap();
    fs::write(dir.path().join("l.json"), env.local.to_json().unwrap()).unwrap();
    let pinned = SMALL
        .replace("global_etas = [1.0, 1.5]", "global_chain = \"g.json\"")
        .replace("local_etas = [0.7, 2.5]", "local_chain = \"l.json\"");
    let path = dir.path().join("pinned.toml");
    fs::write(&path, &pinned).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    assert_eq!(loaded.env_config(0).unwrap().global, env.global);
    assert_eq!(loaded.env_config(123).unwrap().local, env.local);
    fs::remove_file(dir.path().join("g.json")).unwrap();
    match ExperimentConfig::load(&path) {
        Err(Error::Config { field, .. }) => assert_eq!(field, "single_node.global_chain"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn shipped_presets_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if path.file_stem().unwrap().to_str().unwrap().starts_with("small") {
            assert!(cfg.wants_oracle() || cfg.scenario.name() == "single-node-oracle");
        }
        n += 1;
    }
    assert!(n >= 10);
}
