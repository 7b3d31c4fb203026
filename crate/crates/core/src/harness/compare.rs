//! Policy comparison: mean costs, reduced cost against a reference policy
//! and empirical CDFs of sampled instantaneous reductions.

use std::fmt::Write as _;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

pub const DEFAULT_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub policy: String,
    pub mean_cost: f64,
    /// Mean of `reference - policy`.
    pub mean_reduced_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub steps: usize,
    pub stats: Vec<PolicyStats>,
    /// 1-based steps drawn for the instantaneous view, ascending.
    pub sample_steps: Vec<usize>,
    /// `sampled[p][k]`: reduced cost of policy `p` at `sample_steps[k]`.
    pub sampled: Vec<Vec<f64>>,
    /// Whether `noncausal` has the largest mean reduction, when present.
    pub noncausal_dominates: Option<bool>,
}

/// Compares aligned per-step cost series. `seed` selects the sampled steps.
pub fn compare_policies(
    series: &[(String, Vec<f64>)],
    reference: &str,
    samples: usize,
    seed: u64,
) -> Result<Comparison> {
    let (_, ref_costs) = series
        .iter()
        .find(|(n, _)| n == reference)
        .ok_or_else(|| Error::invalid(format!("reference policy `{reference}` not among the inputs")))?;
    let steps = ref_costs.len();
    if steps == 0 {
        return Err(Error::invalid("empty cost series"));
    }
    if let Some((n, v)) = series.iter().find(|(_, v)| v.len() != steps) {
        return Err(Error::Misaligned(format!("`{n}` has {} steps, `{reference}` has {steps}", v.len())));
    }
    let reduced: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, v)| ref_costs.iter().zip(v).map(|(r, c)| r - c).collect())
        .collect();
    let stats: Vec<PolicyStats> = series
        .iter()
        .zip(&reduced)
        .map(|((name, v), red)| PolicyStats {
            policy: name.clone(),
            mean_cost: v.iter().sum::<f64>() / steps as f64,
            mean_reduced_cost: red.iter().sum::<f64>() / steps as f64,
        })
        .collect();
    let mut rng = stream(seed, Stream::Sampling);
    let mut idx = sample(&mut rng, steps, samples.min(steps)).into_vec();
    idx.sort_unstable();
    let sampled = reduced.iter().map(|red| idx.iter().map(|&t| red[t]).collect()).collect();
    let noncausal_dominates = stats.iter().find(|s| s.policy == "noncausal").map(|nc| {
        stats
            .iter()
            .all(|s| s.mean_reduced_cost <= nc.mean_reduced_cost + 1e-9 * nc.mean_cost.abs().max(1.0))
    });
    Ok(Comparison {
        reference: reference.to_string(),
        steps,
        stats,
        sample_steps: idx.into_iter().map(|t| t + 1).collect(),
        sampled,
        noncausal_dominates,
    })
}

impl Comparison {
    /// `step,<policy>...` with one row per sampled step.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("step");
        for s in &self.stats {
            out.push(',');
            out.push_str(&s.policy);
        }
        out.push('\n');
        for (k, step) in self.sample_steps.iter().enumerate() {
            let _ = write!(out, "{step}");
            for col in &self.sampled {
                let _ = write!(out, ",{:.16e}", col[k]);
            }
            out.push('\n');
        }
        out
    }

    /// `policy,reduced_cost,cdf`: empirical CDF of the sampled reductions.
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("policy,reduced_cost,cdf\n");
        for (s, col) in self.stats.iter().zip(&self.sampled) {
            for (v, p) in empirical_cdf(col) {
                let _ = writeln!(out, "{},{v:.16e},{p:.16e}", s.policy);
            }
        }
        out
    }
}

/// Sorted values paired with `i / n`, preceded by `(min, 0)`.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let start = v.first().map(|&x| (x, 0.0));
    start
        .into_iter()
        .chain(v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)))
        .collect()
}
