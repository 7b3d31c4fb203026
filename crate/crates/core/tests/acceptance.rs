//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so every line is printed; exits nonzero if any fails.
//! An optional argument restricts the run to criteria whose name contains it.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use cachelearn::cache::{enumerate_actions, random_action, ActionVector};
use cachelearn::harness::{run_seed, ExperimentConfig, RunRecord};
use cachelearn::linear::{approx_q, greedy_action, LinearQParams};
use cachelearn::mdp::{bellman_residual, build_mdp, policy_iteration, value_iteration};
use cachelearn::network::{aggregate_state, leaf_cost, network_cost, parent_cost, slot_avg_cost, LeafReport, SlotRecord};
use cachelearn::nn::{masked_l2_loss, FeedforwardNet, Head};
use cachelearn::popularity::{chain_from_etas, RequestVector};
use cachelearn::rng::{stream, Stream};
use cachelearn::schedule::EpsilonSchedule;
use cachelearn::single_node::{CostWeights, SystemState};

type Check = Result<(bool, String), String>;

fn preset(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Runs every seed of `cfg` and keeps only `f` of each record.
fn per_seed<T: Send>(cfg: &ExperimentConfig, f: impl Fn(&RunRecord) -> T + Sync) -> Result<Vec<T>, String> {
    cfg.seed_list()
        .par_iter()
        .map(|&s| run_seed(cfg, s).map(|r| f(&r)).map_err(|e| e.to_string()))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn tail_mean(v: &[f64], from: usize) -> f64 {
    mean(&v[from..])
}

fn oracle_exactness() -> Check {
    let mut rng = stream(2024, Stream::Instance);
    let files = 10;
    let global = chain_from_etas(&[1.0, 1.5], files, &mut rng).map_err(|e| e.to_string())?;
    let local = chain_from_etas(&[0.7, 2.5], files, &mut rng).map_err(|e| e.to_string())?;
    let mut worst_res: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for name in ["s1", "s2", "s3"] {
        let w = CostWeights::preset(name).ok_or("preset")?;
        let (mdp, _) = build_mdp(&global, &local, files, 2, &w, 0.9).map_err(|e| e.to_string())?;
        let pi = policy_iteration(&mdp).map_err(|e| e.to_string())?;
        let vi = value_iteration(&mdp, 1e-11).map_err(|e| e.to_string())?;
        worst_res = worst_res.max(bellman_residual(&mdp, &pi.value, &pi.policy));
        let gap = pi.value.iter().zip(&vi.value).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_gap = worst_gap.max(gap);
    }
    Ok((
        worst_res <= 1e-9 && worst_gap <= 1e-8,
        format!("residual {worst_res:.2e} (<= 1e-9), PI vs VI sup-norm {worst_gap:.2e} (<= 1e-8)"),
    ))
}

fn tabular_convergence() -> Check {
    let mut cfg = preset("small-s2.toml");
    // 20000 slots of pure exploration, then 1/t
    cfg.tabular.epsilon = EpsilonSchedule::BurnInInverse { slots: 20_000 };
    let from = cfg.steps - cfg.steps / 10;
    let rows = per_seed(&cfg, |r| (tail_mean(&r.cost, from), tail_mean(r.column("oracle").unwrap(), from)))?;
    let q = mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let o = mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let ratio = q / o;
    Ok((
        rows.len() >= 100 && ratio <= 1.05,
        format!(
            "{} seeds, last-10% mean: tabular {q:.3}, oracle {o:.3}, ratio {ratio:.4} (<= 1.05)",
            rows.len()
        ),
    ))
}

/// First step at which the trailing `window`-slot mean is within `band` of
/// the oracle's average; `None` if never.
fn first_hit(cost: &[f64], oracle_avg: f64, window: usize, band: f64) -> Option<usize> {
    let mut acc: f64 = cost[..window].iter().sum();
    for t in window..=cost.len() {
        if acc / window as f64 <= band * oracle_avg {
            return Some(t);
        }
        if t < cost.len() {
            acc += cost[t] - cost[t - window];
        }
    }
    None
}

fn speed_ordering() -> Check {
    let window = 1000;
    let mut out = Vec::new();
    for name in ["small-s1.toml", "small-s1-linear.toml"] {
        let cfg = preset(name);
        let horizon = cfg.steps;
        let hits = per_seed(&cfg, |r| first_hit(&r.cost, mean(r.column("oracle").unwrap()), window, 1.1))?;
        let censored = hits.iter().filter(|h| h.is_none()).count();
        let avg = mean(&hits.iter().map(|h| h.unwrap_or(horizon) as f64).collect::<Vec<_>>());
        out.push((avg, censored, hits.len()));
    }
    let (tab, lin) = (out[0], out[1]);
    Ok((
        lin.0 < tab.0,
        format!(
            "mean first hit of 110% band ({window}-slot window): linear {:.0} ({} of {} censored), tabular {:.0} ({} of {} censored at horizon)",
            lin.0, lin.1, lin.2, tab.0, tab.1, tab.2
        ),
    ))
}

fn argmax_equivalence() -> Check {
    let mut rng = stream(7, Stream::Agent);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for files in 1..=8 {
        for m in 1..=files.min(4) {
            let actions = enumerate_actions(files, m).map_err(|e| e.to_string())?;
            for _ in 0..1000 {
                let (ng, nl) = (rng.gen_range(1..4), rng.gen_range(1..4));
                let mut p = LinearQParams::zeros(ng, nl, files);
                for i in 0..ng {
                    p.global_row_mut(i).iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
                }
                for j in 0..nl {
                    p.local_row_mut(j).iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
                }
                p.set_theta_r(rng.gen_range(-1.0..1.0));
                let state = SystemState {
                    global_idx: rng.gen_range(0..ng),
                    local_idx: rng.gen_range(0..nl),
                    action: random_action(files, m, &mut rng).map_err(|e| e.to_string())?,
                };
                let greedy = greedy_action(&state, &p, m).map_err(|e| e.to_string())?;
                let mut best = (f64::INFINITY, 0);
                for k in 0..actions.len() {
                    let q = approx_q(&state, actions.get(k), &p).map_err(|e| e.to_string())?;
                    if q < best.0 {
                        best = (q, k);
                    }
                }
                checked += 1;
                if &greedy != actions.get(best.1) {
                    mismatches += 1;
                }
            }
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches in {checked} cases (F <= 8, M <= 4)")))
}

fn parameter_count() -> Check {
    let (g, l, f) = (50, 40, 1000);
    let n = LinearQParams::zeros(g, l, f).num_parameters();
    Ok((n == 90_001, format!("{n} parameters for |P_G|={g}, |P_L|={l}, F={f} (expected 90001)")))
}

fn gradient_correctness() -> Check {
    let mut rng = stream(11, Stream::NetInit);
    let archs: [(&[usize], Head); 6] = [
        (&[20, 40, 20], Head::Linear),
        (&[40, 80, 40], Head::Linear),
        (&[20, 16, 20], Head::Linear),
        (&[6, 5, 4, 3], Head::Linear),
        (&[10, 20, 10], Head::Softmax),
        (&[5, 3, 7], Head::Softmax),
    ];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (sizes, head) in archs {
        let net = FeedforwardNet::random(sizes, head, &mut rng).map_err(|e| e.to_string())?;
        let (din, dout) = (net.input_dim(), net.output_dim());
        for trial in 0..3 {
            let x: Vec<f64> = (0..din).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..dout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m: Vec<f64> = match trial {
                0 => vec![1.0; dout],
                _ => (0..dout).map(|k| if k == 0 || rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect(),
            };
            let (_, g) = net.backward(&x, &t, &m).map_err(|e| e.to_string())?;
            let analytic = g.flat();
            let theta = net.flat();
            let mut probe = net.clone();
            let mut loss = |p: &[f64]| -> Result<f64, String> {
                probe.set_flat(p).map_err(|e| e.to_string())?;
                let y = probe.forward(&x).map_err(|e| e.to_string())?;
                masked_l2_loss(&y, &t, &m).map_err(|e| e.to_string())
            };
            for i in 0..theta.len() {
                let mut p = theta.clone();
                p[i] = theta[i] + h;
                let up = loss(&p)?;
                p[i] = theta[i] - h;
                let down = loss(&p)?;
                let numeric = (up - down) / (2.0 * h);
                let denom = (analytic[i].abs() + numeric.abs()).max(1e-7);
                worst = worst.max((analytic[i] - numeric).abs() / denom);
            }
        }
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e} over 6 architectures, masked and unmasked (<= 1e-4)")))
}

fn av(bits: &[u8]) -> ActionVector {
    ActionVector::try_from(bits.to_vec()).unwrap()
}

fn network_identities() -> Check {
    let e = |x: cachelearn::Error| x.to_string();
    let mut failures = Vec::new();
    let mut expect = |label: &str, got: Vec<f64>, want: &[f64]| {
        if got != want {
            failures.push(format!("{label}: {got:?} != {want:?}"));
        }
    };
    expect("leaf miss, parent miss", leaf_cost(&av(&[0]), &[3.0], &av(&[0])).map_err(e)?, &[6.0]);
    expect("leaf miss, parent hit", leaf_cost(&av(&[0]), &[3.0], &av(&[1])).map_err(e)?, &[3.0]);
    expect("leaf hit", leaf_cost(&av(&[1]), &[3.0], &av(&[0])).map_err(e)?, &[0.0]);
    let reports = [
        Some(LeafReport { mean_requests: vec![4.0, 2.0], cached: av(&[1, 0]) }),
        Some(LeafReport { mean_requests: vec![1.0, 1.0], cached: av(&[0, 1]) }),
    ];
    expect(
        "aggregate state",
        aggregate_state(&reports, &[1.0, 1.0]).map_err(e)?.as_slice().to_vec(),
        &[1.0, 2.0],
    );
    expect(
        "parent cost",
        parent_cost(&[Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0])], &[1.0, 2.0]).map_err(e)?,
        &[1.0, 2.0],
    );
    let slots = [
        SlotRecord { action: av(&[0, 1]), requests: RequestVector(vec![2, 4]) },
        SlotRecord { action: av(&[1, 0]), requests: RequestVector(vec![6, 2]) },
    ];
    expect("two-slot average", slot_avg_cost(&slots, 2, &av(&[0, 0])).map_err(e)?, &[2.0, 2.0]);
    expect("two-slot average, parent hit", slot_avg_cost(&slots, 2, &av(&[1, 0])).map_err(e)?, &[1.0, 2.0]);

    let mut rng = stream(5, Stream::Leaves);
    let mut violations = 0;
    for _ in 0..1000 {
        let files = rng.gen_range(2..12);
        let leaves = rng.gen_range(1..5);
        let t = rng.gen_range(1..4);
        let weights: Vec<f64> = (0..leaves).map(|_| rng.gen_range(0.0..2.0)).collect();
        let mut records = Vec::new();
        for _ in 0..leaves {
            let cap = rng.gen_range(0..files);
            let slots: Vec<SlotRecord> = (0..t)
                .map(|_| SlotRecord {
                    action: random_action(files, cap, &mut rng).unwrap(),
                    requests: RequestVector((0..files).map(|_| rng.gen_range(0..20)).collect()),
                })
                .collect();
            records.push(slots);
        }
        let m0 = rng.gen_range(0..files);
        let a0 = random_action(files, m0, &mut rng).map_err(e)?;
        let mut bits: Vec<u8> = a0.bits().to_vec();
        let free: Vec<usize> = (0..files).filter(|&f| bits[f] == 0).collect();
        bits[free[rng.gen_range(0..free.len())]] = 1;
        let bigger = av(&bits);
        let total = |a: &ActionVector| -> Result<f64, String> {
            let costs = records
                .iter()
                .map(|s| slot_avg_cost(s, t, a).map(Some))
                .collect::<Result<Vec<_>, _>>()
                .map_err(e)?;
            Ok(parent_cost(&costs, &weights).map_err(e)?.iter().sum())
        };
        let (small, large) = (total(&a0)?, total(&bigger)?);
        // total cost also equals D (2 - a0) summed, with D the weighted leaf misses
        let no_parent = av(&vec![0; files]);
        let d: Vec<f64> = {
            let costs = records
                .iter()
                .map(|s| slot_avg_cost(s, t, &no_parent).map(Some))
                .collect::<Result<Vec<_>, _>>()
                .map_err(e)?;
            parent_cost(&costs, &weights).map_err(e)?.iter().map(|c| c / 2.0).collect()
        };
        let via_d = network_cost(&d, &a0).map_err(e)?;
        if large > small + 1e-9 * small.max(1.0) || (via_d - small).abs() > 1e-9 * small.max(1.0) {
            violations += 1;
        }
    }
    Ok((
        failures.is_empty() && violations == 0,
        format!(
            "{} hand-example mismatches {failures:?}; {violations} monotonicity/identity violations in 1000 random trials",
            failures.len()
        ),
    ))
}

/// Post-burn-in means of every policy for each seed of a network preset.
fn network_means(name: &str) -> Result<Vec<RunRecord>, String> {
    let cfg = preset(name);
    per_seed(&cfg, |r| {
        let half = r.steps() / 2;
        let m = r.averages_from(half);
        let mut rec = RunRecord::new(r.seed, r.policy.clone(), vec![m[&r.policy]]);
        for (n, _) in &r.columns {
            rec.columns.push((n.clone(), vec![m[n]]));
        }
        rec
    })
}

fn dqn_vs_baselines() -> Check {
    let runs = network_means("network-n10.toml")?;
    let mut passed = 0;
    let mut ratios = Vec::new();
    for r in &runs {
        let get = |n: &str| r.column(n).unwrap()[0];
        let dqn = get("dqn");
        let ok = ["lru", "lfu", "fifo"].iter().all(|b| dqn <= get(b)) && dqn >= get("noncausal");
        passed += usize::from(ok);
        ratios.push(dqn / get("noncausal"));
    }
    Ok((
        passed >= 8,
        format!(
            "{passed} of {} seeds pass (>= 8); mean dqn/noncausal {:.4}",
            runs.len(),
            mean(&ratios)
        ),
    ))
}

fn smoothing_trend() -> Check {
    let ratio = |name: &str| -> Result<(f64, usize), String> {
        let runs = network_means(name)?;
        let r: Vec<f64> = runs
            .iter()
            .map(|r| r.column("dqn").unwrap()[0] / r.column("noncausal").unwrap()[0])
            .collect();
        Ok((mean(&r), r.len()))
    };
    let (small, n1) = ratio("network-n5.toml")?;
    let (large, n2) = ratio("network-n50-scaled.toml")?;
    Ok((
        large <= small && n1 == n2,
        format!("dqn/noncausal: N=5 {small:.4}, N=50 {large:.4} ({n1} seeds each)"),
    ))
}

fn determinism() -> Check {
    let mut single = preset("small-s1.toml");
    single.steps = 3000;
    single.override_seeds(vec![3, 4]);
    let mut lin = preset("small-s1-linear.toml");
    lin.steps = 3000;
    lin.override_seeds(vec![5]);
    let mut net = preset("network-n10.toml");
    net.steps = 60;
    net.override_seeds(vec![1, 2]);
    let mut pairs = 0;
    let mut differing = Vec::new();
    for cfg in [single, lin, net] {
        for s in cfg.seed_list() {
            let a = run_seed(&cfg, s).map_err(|e| e.to_string())?.to_csv();
            let b = run_seed(&cfg, s).map_err(|e| e.to_string())?.to_csv();
            pairs += 1;
            if a.as_bytes() != b.as_bytes() {
                differing.push(format!("{}:{s}", cfg.run_name()));
            }
        }
    }
    Ok((differing.is_empty(), format!("{pairs} (config, seed) pairs rerun; differing: {differing:?}")))
}

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, Option<u64>, fn() -> Check); 10] = [
        ("oracle exactness", Some(10), oracle_exactness),
        ("tabular convergence under s2", Some(600), tabular_convergence),
        ("speed ordering under s1", Some(600), speed_ordering),
        ("argmax equivalence", None, argmax_equivalence),
        ("parameter count", None, parameter_count),
        ("gradient correctness", None, gradient_correctness),
        ("network-cost identities", None, network_identities),
        ("dqn vs baselines", Some(900), dqn_vs_baselines),
        ("smoothing-with-scale trend", None, smoothing_trend),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, budget, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let over = budget.is_some_and(|b| elapsed > Duration::from_secs(b));
        let (pass, detail) = match result {
            Ok((ok, d)) => (ok && !over, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let budget_note = budget.map_or(String::new(), |b| format!(", budget {b} s"));
        println!(
            "{} {name}: {detail} [{:.1} s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        failed += usize::from(!pass);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
