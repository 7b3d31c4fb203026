//! Exact finite MDP for known popularity chains, solved by policy iteration.
//!
//! States are indexed row-major over (global idx, local idx, action idx), see
//! [`StateSpace`]. Choosing action `a` in state `(i, j, a_old)` moves to
//! `(i', j', a)` with probability `T_G[i][i'] * T_L[j][j']`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::popularity::PopularityChain;
use crate::single_node::{aggregate_cost, CostWeights, StateSpace};

/// Largest number of tabulated state-action pairs.
pub const MAX_STATE_ACTIONS: usize = 1_000_000;
/// Largest state count solved by a dense linear system.
pub const DENSE_SOLVE_LIMIT: usize = 2000;
/// Sup-norm stopping threshold of the value-iteration cross-check.
pub const VALUE_ITERATION_TOL: f64 = 1e-10;

/// Tabulated MDP: sparse successor lists and mean costs per state-action pair.
#[derive(Debug, Clone)]
pub struct ExplicitMdp {
    num_states: usize,
    num_actions: usize,
    /// `(s * num_actions + a) -> [(s', p)]`
    transitions: Vec<Vec<(usize, f64)>>,
    /// `s * num_actions + a -> mean cost`
    costs: Vec<f64>,
    gamma: f64,
}

impl ExplicitMdp {
    /// Builds an MDP from raw tables, checking row sums and finiteness.
    pub fn from_tables(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        costs: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let pairs = num_states * num_actions;
        if pairs == 0 {
            return Err(Error::invalid("MDP needs at least one state and action"));
        }
        if transitions.len() != pairs || costs.len() != pairs {
            return Err(Error::invalid("table sizes differ from states x actions"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        for (k, row) in transitions.iter().enumerate() {
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 || row.iter().any(|&(s, p)| s >= num_states || p < 0.0) {
                return Err(Error::invalid(format!("transition row {k} is not stochastic")));
            }
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("non-finite mean cost".into()));
        }
        Ok(ExplicitMdp {
            num_states,
            num_actions,
            transitions,
            costs,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.num_actions + a]
    }

    pub fn mean_cost(&self, s: usize, a: usize) -> f64 {
        self.costs[s * self.num_actions + a]
    }

    /// Same MDP with every cost multiplied by `k`.
    pub fn scaled_costs(&self, k: f64) -> Self {
        ExplicitMdp {
            costs: self.costs.iter().map(|c| c * k).collect(),
            ..self.clone()
        }
    }

    fn backup(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let future: f64 = self.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum();
        self.mean_cost(s, a) + self.gamma * future
    }

    /// `Q(s, a) = C(s, a) + gamma * sum_s' P V(s')`, flattened row-major.
    pub fn q_values(&self, v: &[f64]) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.num_states * self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                q.push(self.backup(s, a, v));
            }
        }
        q
    }

    /// Samples a successor of `(s, a)`.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let row = self.successors(s, a);
        for &(t, p) in row {
            acc += p;
            if u < acc {
                return t;
            }
        }
        row.last().map(|&(t, _)| t).unwrap_or(s)
    }
}

/// Tabulates the caching MDP for known chains.
pub fn build_mdp(
    global: &PopularityChain,
    local: &PopularityChain,
    files: usize,
    capacity: usize,
    weights: &CostWeights,
    gamma: f64,
) -> Result<(ExplicitMdp, StateSpace)> {
    if global.num_files() != files || local.num_files() != files {
        return Err(Error::invalid("chain profile length differs from file count"));
    }
    weights.validate()?;
    let space = StateSpace::new(global.num_states(), local.num_states(), files, capacity)?;
    let ns = space.num_states();
    let na = space.num_actions();
    if ns.saturating_mul(na) > MAX_STATE_ACTIONS {
        return Err(Error::Capacity(format!(
            "{ns} states x {na} actions exceeds {MAX_STATE_ACTIONS} tabulated pairs"
        )));
    }
    let mut transitions = Vec::with_capacity(ns * na);
    let mut costs = Vec::with_capacity(ns * na);
    for s in 0..ns {
        let (i, j, a_old) = space.decode(s);
        let old = space.actions.get(a_old);
        for a in 0..na {
            let new = space.actions.get(a);
            let mut row = Vec::new();
            let mut mean = 0.0;
            for (i2, &pg) in global.row(i).iter().enumerate() {
                for (j2, &pl) in local.row(j).iter().enumerate() {
                    let p = pg * pl;
                    if p == 0.0 {
                        continue;
                    }
                    row.push((space.index_parts(i2, j2, a), p));
                    mean += p * aggregate_cost(old, new, global.state(i2), local.state(j2), weights)?;
                }
            }
            transitions.push(row);
            costs.push(mean);
        }
    }
    let mdp = ExplicitMdp::from_tables(ns, na, transitions, costs, gamma)?;
    Ok((mdp, space))
}

/// State values and the action chosen in each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub value: Vec<f64>,
    pub policy: Vec<usize>,
}

impl ValueTable {
    /// JSON dump with the state indexing documented alongside.
    pub fn to_json(&self, mdp: &ExplicitMdp) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            indexing: &'static str,
            num_states: usize,
            num_actions: usize,
            gamma: f64,
            value: &'a [f64],
            policy: &'a [usize],
        }
        Ok(serde_json::to_string_pretty(&Dump {
            indexing: "row-major (global_idx, local_idx, action_idx); actions in lexicographic order",
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            gamma: mdp.gamma(),
            value: &self.value,
            policy: &self.policy,
        })?)
    }
}

fn check_policy(mdp: &ExplicitMdp, policy: &[usize]) -> Result<()> {
    if policy.len() != mdp.num_states() || policy.iter().any(|&a| a >= mdp.num_actions()) {
        return Err(Error::invalid("policy does not match MDP dimensions"));
    }
    Ok(())
}

/// Solves `V = C_pi + gamma P_pi V`.
pub fn policy_evaluation(mdp: &ExplicitMdp, policy: &[usize]) -> Result<ValueTable> {
    check_policy(mdp, policy)?;
    let n = mdp.num_states();
    let value = if n <= DENSE_SOLVE_LIMIT {
        dense_evaluation(mdp, policy)?
    } else {
        iterative_evaluation(mdp, policy)?
    };
    Ok(ValueTable {
        value,
        policy: policy.to_vec(),
    })
}

fn dense_evaluation(mdp: &ExplicitMdp, policy: &[usize]) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        let act = policy[s];
        b[s] = mdp.mean_cost(s, act);
        for &(t, p) in mdp.successors(s, act) {
            a[(s, t)] -= mdp.gamma() * p;
        }
    }
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
    // one round of iterative refinement
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value".into()));
    }
    Ok(x.iter().copied().collect())
}

fn iterative_evaluation(mdp: &ExplicitMdp, policy: &[usize]) -> Result<Vec<f64>> {
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    let scale = (0..n).map(|s| mdp.mean_cost(s, policy[s]).abs()).fold(1.0, f64::max);
    for _ in 0..1_000_000 {
        // Gauss-Seidel sweep
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let nv = mdp.backup(s, policy[s], &v);
            delta = delta.max((nv - v[s]).abs());
            v[s] = nv;
        }
        if delta <= 1e-13 * scale / (1.0 - mdp.gamma()) {
            return Ok(v);
        }
    }
    Err(Error::Numerical("iterative policy evaluation did not converge".into()))
}

/// Max over states of `|C(s, pi(s)) + gamma sum P V - V(s)|`.
pub fn bellman_residual(mdp: &ExplicitMdp, value: &[f64], policy: &[usize]) -> f64 {
    (0..mdp.num_states())
        .map(|s| (mdp.backup(s, policy[s], value) - value[s]).abs())
        .fold(0.0, f64::max)
}

fn greedy(mdp: &ExplicitMdp, v: &[f64], s: usize) -> (usize, f64) {
    let mut best = 0;
    let mut best_q = f64::INFINITY;
    for a in 0..mdp.num_actions() {
        let q = mdp.backup(s, a, v);
        if q < best_q {
            best = a;
            best_q = q;
        }
    }
    (best, best_q)
}

/// Howard policy iteration starting from action 0 everywhere. A state's
/// action changes only on strict improvement, so ties keep the lower index
/// chosen first and the loop cannot cycle.
pub fn policy_iteration(mdp: &ExplicitMdp) -> Result<ValueTable> {
    let n = mdp.num_states();
    let mut policy = vec![0usize; n];
    let max_sweeps = 10_000;
    for _ in 0..max_sweeps {
        let table = policy_evaluation(mdp, &policy)?;
        let v = &table.value;
        let scale = v.iter().map(|x| x.abs()).fold(1.0, f64::max);
        let tol = 1e-12 * scale;
        let mut changed = false;
        for s in 0..n {
            let current = mdp.backup(s, policy[s], v);
            let (best, best_q) = greedy(mdp, v, s);
            if best_q < current - tol {
                policy[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(table);
        }
    }
    Err(Error::Internal("policy iteration did not converge".into()))
}

/// Value iteration to a sup-norm change below `tol`; the greedy policy
/// uses lowest-index tie-breaking.
pub fn value_iteration(mdp: &ExplicitMdp, tol: f64) -> Result<ValueTable> {
    let n = mdp.num_states();
    let mut v = vec![0.0; n];
    for _ in 0..10_000_000 {
        let next: Vec<f64> = (0..n).map(|s| greedy(mdp, &v, s).1).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < tol {
            let policy = (0..n).map(|s| greedy(mdp, &v, s).0).collect();
            return Ok(ValueTable { value: v, policy });
        }
    }
    Err(Error::Numerical("value iteration did not converge".into()))
}
