use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
scenario = "single-node-tabular"
steps = 10
seeds = [0, 1]
name = "tiny"

[single_node]
files = 10
capacity = 2
preset = "s2"
global_etas = [1.0, 1.5]
local_etas = [0.7, 2.5]
"#;

fn cli(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cachelearn"));
    cmd.args(args).env_remove("CACHELEARN_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("CACHELEARN_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_reports_success_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.toml", CONFIG);
    let out = cli(&["validate", &good], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: tiny"));

    let bad = write_config(dir.path(), "bad.toml", &CONFIG.replace("capacity = 2", "capacity = 12"));
    let out = cli(&["validate", &bad], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("single_node.capacity"));

    let unknown = write_config(dir.path(), "unknown.toml", &format!("{CONFIG}\nextra = 1\n"));
    assert_eq!(cli(&["validate", &unknown], None).status.code(), Some(2));
    assert_eq!(cli(&["validate", "/nonexistent/cfg.toml"], None).status.code(), Some(2));
}

#[test]
fn run_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = cli(&["run", &cfg, "--out-dir", a.to_str().unwrap(), "--threads", "1"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cli(&["run", &cfg, "--out-dir", b.to_str().unwrap(), "--threads", "2"], None);
    assert_eq!(out.status.code(), Some(0));
    for f in ["seed-0.csv", "seed-1.csv", "mean.csv", "seed-0.json", "summary.json"] {
        let x = fs::read(a.join("tiny").join(f)).unwrap();
        let y = fs::read(b.join("tiny").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let mean = fs::read_to_string(a.join("tiny/mean.csv")).unwrap();
    assert_eq!(mean.lines().count(), 11);
}

#[test]
fn seed_override_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONFIG);
    let env_dir = dir.path().join("from-env");
    let out = cli(&["run", &cfg, "--seed-override", "7,9"], Some(&env_dir));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("tiny/seed-7.csv").exists());
    assert!(env_dir.join("tiny/seed-9.csv").exists());
    assert!(!env_dir.join("tiny/seed-0.csv").exists());
}

#[test]
fn oracle_dumps_value_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONFIG);
    let out_dir = dir.path().join("o");
    let out = cli(&["oracle", &cfg, "--seed-override", "3", "--out-dir", out_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let dump: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("tiny/oracle-seed-3.json")).unwrap()).unwrap();
    assert_eq!(dump["num_actions"], 45);
    assert_eq!(dump["num_states"], 4 * 45);
    assert_eq!(dump["value"].as_array().unwrap().len(), 180);
    assert!(out_dir.join("tiny/global-chain-seed-3.json").exists());
}

#[test]
fn compare_writes_files_and_fails_on_misalignment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CONFIG);
    let runs = dir.path().join("runs");
    assert_eq!(cli(&["run", &cfg, "--out-dir", runs.to_str().unwrap()], None).status.code(), Some(0));
    let trace = runs.join("tiny/seed-0.csv");
    let cmp = dir.path().join("cmp");
    let out = cli(
        &["compare", trace.to_str().unwrap(), "--reference", "oracle", "--out-dir", cmp.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("tabular"));
    for f in ["compare.json", "compare-samples.csv", "compare-cdf.csv"] {
        assert!(cmp.join(f).exists());
    }

    let short = dir.path().join("short.csv");
    fs::write(&short, "step,cost,run_mean\n1,1e0,1e0\n").unwrap();
    let out = cli(&["compare", trace.to_str().unwrap(), short.to_str().unwrap(), "--reference", "oracle"], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("misaligned"));
}
