//! Per-run cost traces and their CSV / JSON forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost trace of one run: the primary policy plus any comparison columns
/// simulated on the same realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// `None` for a cross-seed mean.
    pub seed: Option<u64>,
    /// Name of the policy behind the `cost` column.
    pub policy: String,
    pub cost: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

impl RunRecord {
    pub fn new(seed: Option<u64>, policy: impl Into<String>, cost: Vec<f64>) -> Self {
        RunRecord {
            seed,
            policy: policy.into(),
            cost,
            columns: Vec::new(),
        }
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.cost.len() {
            return Err(Error::Misaligned(format!(
                "column has {} steps, trace has {}",
                values.len(),
                self.cost.len()
            )));
        }
        self.columns.push((name.into(), values));
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.cost.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        if name == self.policy {
            return Some(&self.cost);
        }
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Cumulative mean of the primary cost.
    pub fn running_mean(&self) -> Vec<f64> {
        let mut sum = 0.0;
        self.cost
            .iter()
            .enumerate()
            .map(|(i, c)| {
                sum += c;
                sum / (i + 1) as f64
            })
            .collect()
    }

    /// `step,cost,run_mean[,column...]`, one row per step, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,cost,run_mean");
        for (name, _) in &self.columns {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let mean = self.running_mean();
        for t in 0..self.cost.len() {
            let _ = write!(out, "{},{},{}", t + 1, fmt(self.cost[t]), fmt(mean[t]));
            for (_, v) in &self.columns {
                out.push(',');
                out.push_str(&fmt(v[t]));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`RunRecord::to_csv`] output; the primary policy is named
    /// `policy`.
    pub fn from_csv(text: &str, policy: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::invalid("empty CSV"))?
            .split(',')
            .collect();
        if header.len() < 3 || header[..3] != ["step", "cost", "run_mean"] {
            return Err(Error::invalid("CSV header must start with step,cost,run_mean"));
        }
        let mut cost = Vec::new();
        let mut extra: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 3];
        for (row, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(Error::invalid(format!("row {} has {} fields", row + 1, fields.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("row {}: {e}", row + 1)))
            };
            cost.push(parse(fields[1])?);
            for (col, f) in extra.iter_mut().zip(&fields[3..]) {
                col.push(parse(f)?);
            }
        }
        Ok(RunRecord {
            seed: None,
            policy: policy.to_string(),
            cost,
            columns: header[3..].iter().map(|s| s.to_string()).zip(extra).collect(),
        })
    }

    /// Step-wise mean over records with identical layout.
    pub fn mean_of(records: &[RunRecord]) -> Result<RunRecord> {
        let first = records.first().ok_or_else(|| Error::invalid("no records to average"))?;
        let n = records.len() as f64;
        for r in records {
            let same_cols = r.columns.len() == first.columns.len()
                && r.columns.iter().zip(&first.columns).all(|(a, b)| a.0 == b.0);
            if r.steps() != first.steps() || !same_cols || r.policy != first.policy {
                return Err(Error::Misaligned("records differ in length or columns".into()));
            }
        }
        let avg = |get: &dyn Fn(&RunRecord) -> &[f64]| -> Vec<f64> {
            (0..first.steps())
                .map(|t| records.iter().map(|r| get(r)[t]).sum::<f64>() / n)
                .collect()
        };
        let mut mean = RunRecord::new(None, first.policy.clone(), avg(&|r| &r.cost));
        for (i, (name, _)) in first.columns.iter().enumerate() {
            mean.columns.push((name.clone(), avg(&|r| &r.columns[i].1)));
        }
        Ok(mean)
    }

    /// Mean of every column over the steps `from..`.
    pub fn averages_from(&self, from: usize) -> BTreeMap<String, f64> {
        let mean = |v: &[f64]| {
            let tail = &v[from.min(v.len())..];
            if tail.is_empty() {
                f64::NAN
            } else {
                tail.iter().sum::<f64>() / tail.len() as f64
            }
        };
        let mut out = BTreeMap::new();
        out.insert(self.policy.clone(), mean(&self.cost));
        for (name, v) in &self.columns {
            out.insert(name.clone(), mean(v));
        }
        out
    }
}

/// JSON summary written next to every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub scenario: String,
    /// `None` for the cross-seed mean.
    pub seed: Option<u64>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub steps: usize,
    /// Policy behind the `cost` column.
    pub policy: String,
    /// Mean per-step cost of each policy over the whole run.
    pub final_average: BTreeMap<String, f64>,
    /// Mean per-step cost over the last 10% of steps.
    pub tail_average: BTreeMap<String, f64>,
    pub version: String,
}

impl RunSummary {
    pub fn of(record: &RunRecord, name: &str, scenario: &str, seeds: &[u64], config_hash: &str) -> Self {
        let steps = record.steps();
        RunSummary {
            name: name.to_string(),
            scenario: scenario.to_string(),
            seed: record.seed,
            seeds: seeds.to_vec(),
            config_hash: config_hash.to_string(),
            steps,
            policy: record.policy.clone(),
            final_average: record.averages_from(0),
            tail_average: record.averages_from(steps - steps / 10),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}
