//! Scalable Q-learning with the additive approximation
//! `Q(s, a') ~ psi(s)^T (1 - a')`, where
//! `psi(s) = Theta_G[global idx] + Theta_L[local idx] + theta_R * a`.
//!
//! The greedy action is the top-`M` entries of `psi`, so neither action
//! selection nor the bootstrap minimum needs to enumerate the action set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{random_action, top_m_action, ActionVector};
use crate::error::{Error, Result};
use crate::schedule::EpsilonSchedule;
use crate::single_node::{SingleNodeEnv, SystemState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQParams {
    files: usize,
    n_global: usize,
    n_local: usize,
    /// `n_global x files`, row-major
    theta_g: Vec<f64>,
    /// `n_local x files`, row-major
    theta_l: Vec<f64>,
    theta_r: f64,
}

impl LinearQParams {
    pub fn zeros(n_global: usize, n_local: usize, files: usize) -> Self {
        LinearQParams {
            files,
            n_global,
            n_local,
            theta_g: vec![0.0; n_global * files],
            theta_l: vec![0.0; n_local * files],
            theta_r: 0.0,
        }
    }

    pub fn files(&self) -> usize {
        self.files
    }

    /// Number of learnable scalars: `(|P_G| + |P_L|) F + 1`.
    pub fn num_parameters(&self) -> usize {
        self.theta_g.len() + self.theta_l.len() + 1
    }

    pub fn global_row(&self, i: usize) -> &[f64] {
        &self.theta_g[i * self.files..(i + 1) * self.files]
    }

    pub fn local_row(&self, j: usize) -> &[f64] {
        &self.theta_l[j * self.files..(j + 1) * self.files]
    }

    pub fn global_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.theta_g[i * self.files..(i + 1) * self.files]
    }

    pub fn local_row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.theta_l[j * self.files..(j + 1) * self.files]
    }

    pub fn theta_r(&self) -> f64 {
        self.theta_r
    }

    pub fn set_theta_r(&mut self, v: f64) {
        self.theta_r = v;
    }

    fn check(&self, s: &SystemState) -> Result<()> {
        if s.global_idx >= self.n_global || s.local_idx >= self.n_local || s.action.len() != self.files {
            return Err(Error::invalid("state does not match parameter dimensions"));
        }
        Ok(())
    }
}

/// Per-file score vector of `state`.
pub fn psi(state: &SystemState, params: &LinearQParams) -> Result<Vec<f64>> {
    params.check(state)?;
    let g = params.global_row(state.global_idx);
    let l = params.local_row(state.local_idx);
    Ok(g.iter()
        .zip(l)
        .zip(state.action.bits())
        .map(|((&x, &y), &b)| x + y + params.theta_r * f64::from(b))
        .collect())
}

fn dot_uncached(scores: &[f64], a: &ActionVector) -> f64 {
    scores
        .iter()
        .zip(a.bits())
        .map(|(&s, &b)| s * f64::from(1 - b))
        .sum()
}

/// `psi(state)^T (1 - a_next)`.
pub fn approx_q(state: &SystemState, a_next: &ActionVector, params: &LinearQParams) -> Result<f64> {
    let p = psi(state, params)?;
    if a_next.len() != p.len() {
        return Err(Error::invalid("action length differs from file count"));
    }
    Ok(dot_uncached(&p, a_next))
}

/// Minimizer of [`approx_q`] over all actions with `capacity` files.
pub fn greedy_action(state: &SystemState, params: &LinearQParams, capacity: usize) -> Result<ActionVector> {
    top_m_action(&psi(state, params)?, capacity)
}

/// `cost + gamma min_a' Q(s_new, a') - Q(s_prev, a_taken)`.
pub fn td_error(
    s_prev: &SystemState,
    a_taken: &ActionVector,
    cost: f64,
    s_new: &SystemState,
    params: &LinearQParams,
    gamma: f64,
    capacity: usize,
) -> Result<f64> {
    let next = psi(s_new, params)?;
    let best = top_m_action(&next, capacity)?;
    let bootstrap = dot_uncached(&next, &best);
    Ok(cost + gamma * bootstrap - approx_q(s_prev, a_taken, params)?)
}

/// Step sizes for the three parameter blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSizes {
    pub alpha_g: f64,
    pub alpha_l: f64,
    pub alpha_r: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes {
            alpha_g: 0.005,
            alpha_l: 0.005,
            alpha_r: 0.005,
        }
    }
}

impl StepSizes {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha_g, self.alpha_l, self.alpha_r].iter().all(|&a| a > 0.0 && a.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("step sizes must be positive"))
        }
    }
}

/// Semi-gradient step on `0.5 e^2`: only the rows of the previous chain
/// states and the uncached coordinates of `a_taken` move.
pub fn sgd_update(
    params: &mut LinearQParams,
    s_prev: &SystemState,
    a_taken: &ActionVector,
    td: f64,
    steps: &StepSizes,
) -> Result<()> {
    if !td.is_finite() {
        return Err(Error::Numerical(format!("non-finite TD error {td}")));
    }
    params.check(s_prev)?;
    if a_taken.len() != params.files {
        return Err(Error::invalid("action length differs from file count"));
    }
    let refreshable = s_prev
        .action
        .bits()
        .iter()
        .zip(a_taken.bits())
        .filter(|(&old, &new)| old == 1 && new == 0)
        .count() as f64;
    let dg = steps.alpha_g * td;
    let dl = steps.alpha_l * td;
    let uncached: Vec<usize> = a_taken.uncached().collect();
    let row = params.global_row_mut(s_prev.global_idx);
    for &f in &uncached {
        row[f] += dg;
    }
    let row = params.local_row_mut(s_prev.local_idx);
    for &f in &uncached {
        row[f] += dl;
    }
    params.theta_r += steps.alpha_r * td * refreshable;
    Ok(())
}

/// Runs the scalable learner for `num_slots` slots from the environment's
/// current state and returns the parameters and per-slot cost trace.
pub fn run_linear_q<R: Rng + ?Sized>(
    env: &mut SingleNodeEnv,
    steps: &StepSizes,
    epsilon: &EpsilonSchedule,
    gamma: f64,
    num_slots: usize,
    rng: &mut R,
) -> Result<(LinearQParams, Vec<f64>)> {
    steps.validate()?;
    let cfg = env.config();
    let (files, capacity) = (cfg.files, cfg.capacity);
    let mut params = LinearQParams::zeros(cfg.global.num_states(), cfg.local.num_states(), files);
    let mut trace = Vec::with_capacity(num_slots);
    for t in 1..=num_slots {
        let s_prev = env.state().clone();
        let eps = epsilon.at(t);
        let a = if eps > 0.0 && rng.gen::<f64>() < eps {
            random_action(files, capacity, rng)?
        } else {
            greedy_action(&s_prev, &params, capacity)?
        };
        let out = env.step(&a)?;
        let e = td_error(&s_prev, &a, out.cost, &out.state, &params, gamma, capacity)?;
        sgd_update(&mut params, &s_prev, &a, e, steps)?;
        trace.push(out.cost);
    }
    Ok((params, trace))
}
