//! Exact Q-learning with epsilon-greedy exploration over a fully enumerated
//! state-action table.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cache::ActionVector;
use crate::error::{Error, Result};
use crate::mdp::ExplicitMdp;
use crate::rng::SimRng;
use crate::schedule::{BetaSchedule, EpsilonSchedule};
use crate::single_node::{SingleNodeEnv, StateSpace};

/// Environment with finitely many indexed states and actions.
pub trait FiniteEnv {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn current(&self) -> usize;
    /// Applies `action`, returning the incurred cost and the new state index.
    fn step(&mut self, action: usize) -> Result<(f64, usize)>;
}

/// [`SingleNodeEnv`] seen through its enumerated state space.
pub struct IndexedEnv {
    pub env: SingleNodeEnv,
    pub space: StateSpace,
    current: usize,
}

impl IndexedEnv {
    pub fn new(env: SingleNodeEnv) -> Result<Self> {
        let space = StateSpace::for_env(env.config())?;
        let current = space.index(env.state())?;
        Ok(IndexedEnv { env, space, current })
    }

    pub fn action(&self, idx: usize) -> &ActionVector {
        self.space.actions.get(idx)
    }
}

impl FiniteEnv for IndexedEnv {
    fn num_states(&self) -> usize {
        self.space.num_states()
    }

    fn num_actions(&self) -> usize {
        self.space.num_actions()
    }

    fn current(&self) -> usize {
        self.current
    }

    fn step(&mut self, action: usize) -> Result<(f64, usize)> {
        let a = self.space.actions.get(action).clone();
        let out = self.env.step(&a)?;
        self.current = self.space.index(&out.state)?;
        Ok((out.cost, self.current))
    }
}

/// Samples trajectories of an [`ExplicitMdp`], charging its mean costs.
pub struct MdpSimulator<'a> {
    mdp: &'a ExplicitMdp,
    state: usize,
    rng: SimRng,
}

impl<'a> MdpSimulator<'a> {
    pub fn new(mdp: &'a ExplicitMdp, start: usize, rng: SimRng) -> Self {
        MdpSimulator { mdp, state: start, rng }
    }
}

impl FiniteEnv for MdpSimulator<'_> {
    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn current(&self) -> usize {
        self.state
    }

    fn step(&mut self, action: usize) -> Result<(f64, usize)> {
        let cost = self.mdp.mean_cost(self.state, action);
        self.state = self.mdp.sample_next(self.state, action, &mut self.rng);
        Ok((cost, self.state))
    }
}

/// Dense Q estimates, zero-initialized, with per-entry visit counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        QTable {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
            visits: vec![0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.num_actions + a]
    }

    /// Lowest-index minimizer of row `s` and its value.
    pub fn argmin(&self, s: usize) -> (usize, f64) {
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for (a, &v) in self.row(s).iter().enumerate() {
            if v < best_v {
                best = a;
                best_v = v;
            }
        }
        (best, best_v)
    }

    /// Greedy policy extracted from the table.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.num_states).map(|s| self.argmin(s).0).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Epsilon-greedy choice: a uniformly random action with probability
/// `epsilon`, otherwise the row argmin.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.num_actions())
    } else {
        q.argmin(s).0
    }
}

/// `Q(s,a) <- (1 - beta) Q(s,a) + beta [cost + gamma min_a' Q(s',a')]`.
pub fn q_update(
    q: &mut QTable,
    s_prev: usize,
    action: usize,
    cost: f64,
    s_new: usize,
    beta: f64,
    gamma: f64,
) -> Result<()> {
    if s_prev >= q.num_states || s_new >= q.num_states || action >= q.num_actions {
        return Err(Error::invalid("Q-table index out of range"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("step size must lie in (0, 1], got {beta}")));
    }
    let target = cost + gamma * q.argmin(s_new).1;
    let k = s_prev * q.num_actions + action;
    q.values[k] = (1.0 - beta) * q.values[k] + beta * target;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LearningSchedule {
    pub beta: BetaSchedule,
    pub epsilon: EpsilonSchedule,
}

/// Runs the act / reveal / charge / update loop for `num_slots` slots and
/// returns the table with the per-slot cost trace.
pub fn run_q_learning<E: FiniteEnv, R: Rng + ?Sized>(
    env: &mut E,
    schedule: &LearningSchedule,
    gamma: f64,
    num_slots: usize,
    rng: &mut R,
) -> Result<(QTable, Vec<f64>)> {
    let mut q = QTable::new(env.num_states(), env.num_actions());
    let mut trace = Vec::with_capacity(num_slots);
    for t in 1..=num_slots {
        let s_prev = env.current();
        let a = select_action(&q, s_prev, schedule.epsilon.at(t), rng);
        let (cost, s_new) = env.step(a)?;
        let k = s_prev * q.num_actions + a;
        q.visits[k] += 1;
        let beta = schedule.beta.at(q.visits[k]);
        q_update(&mut q, s_prev, a, cost, s_new, beta, gamma)?;
        trace.push(cost);
    }
    Ok((q, trace))
}
