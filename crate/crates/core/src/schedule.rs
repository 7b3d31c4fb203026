//! Exploration and step-size schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability of taking a uniformly random action at (1-based) step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EpsilonSchedule {
    Constant { value: f64 },
    /// Pure exploration for `slots` steps, then `1 / t`.
    BurnInInverse { slots: usize },
    /// Linear interpolation from `start` to `end` over the first `steps`
    /// steps, constant afterwards.
    Linear { start: f64, end: f64, steps: usize },
}

impl EpsilonSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            EpsilonSchedule::Constant { value } => value,
            EpsilonSchedule::BurnInInverse { slots } => {
                if t <= slots {
                    1.0
                } else {
                    1.0 / t as f64
                }
            }
            EpsilonSchedule::Linear { start, end, steps } => {
                if steps == 0 || t >= steps {
                    end
                } else {
                    start + (end - start) * (t as f64 / steps as f64)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        let valid = match *self {
            EpsilonSchedule::Constant { value } => ok(value),
            EpsilonSchedule::BurnInInverse { .. } => true,
            EpsilonSchedule::Linear { start, end, .. } => ok(start) && ok(end),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::invalid("exploration probability must lie in [0, 1]"))
        }
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::Constant { value: 0.05 }
    }
}

/// Q-learning step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BetaSchedule {
    Constant { value: f64 },
    /// `1 / n` where `n` counts visits of the updated state-action pair.
    VisitCount,
}

impl BetaSchedule {
    pub fn at(&self, visits: u64) -> f64 {
        match *self {
            BetaSchedule::Constant { value } => value,
            BetaSchedule::VisitCount => 1.0 / visits.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Constant { value } if !(value > 0.0 && value <= 1.0) => {
                Err(Error::invalid(format!("step size must lie in (0, 1], got {value}")))
            }
            _ => Ok(()),
        }
    }
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Constant { value: 0.8 }
    }
}
