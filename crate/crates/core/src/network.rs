//! Two-level caching network: `N` leaf caches serve fast-slot requests with
//! their own policies, and a parent cache decides once per interval of `T`
//! slots which files to hold for the demand the leaves cannot serve.
//!
//! Leaf dynamics never depend on the parent action, so an interval can be
//! simulated once ([`Network::simulate_interval`]) and then priced for any
//! number of parent actions.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{check_len, top_m_action, ActionVector, EvictionCache, EvictionPolicy};
use crate::error::{Error, Result};
use crate::popularity::{
    random_ordering, sample_requests, step_chain, zipf_profile, PopularityChain, ProbVector,
    RequestVector,
};
use crate::rng::SimRng;

/// Per-file cost of leaf `n` for one slot:
/// `r (1 - a0)(1 - a_n) + r (1 - a_n)`, entrywise.
pub fn leaf_cost(a_n: &ActionVector, r_n: &[f64], a0: &ActionVector) -> Result<Vec<f64>> {
    check_len(a_n.len(), r_n.len())?;
    check_len(a0.len(), r_n.len())?;
    Ok(r_n
        .iter()
        .zip(a_n.bits())
        .zip(a0.bits())
        .map(|((&r, &an), &ap)| {
            let leaf_miss = r * f64::from(1 - an);
            leaf_miss * f64::from(1 - ap) + leaf_miss
        })
        .collect())
}

/// Local caching rule of a leaf.
pub trait LeafPolicy: Send {
    /// Action for the coming slot, given everything observed so far.
    fn action(&self) -> &ActionVector;
    /// Records the requests of the slot that just ended.
    fn observe(&mut self, requests: &[f64]) -> Result<()>;
    /// The decision rule applied to an arbitrary state, with no side effects.
    fn evaluate(&self, state: &[f64]) -> Result<ActionVector>;
    fn box_clone(&self) -> Box<dyn LeafPolicy>;
}

impl Clone for Box<dyn LeafPolicy> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

/// Caches the files with the largest exponentially smoothed request counts:
/// `m <- rho r + (1 - rho) m`.
#[derive(Debug, Clone)]
pub struct SmoothingPolicy {
    rho: f64,
    capacity: usize,
    memory: Vec<f64>,
    action: ActionVector,
}

impl SmoothingPolicy {
    pub const DEFAULT_RHO: f64 = 0.3;

    pub fn new(files: usize, capacity: usize, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::invalid(format!("smoothing factor {rho} outside (0, 1]")));
        }
        Ok(SmoothingPolicy {
            rho,
            capacity,
            memory: vec![0.0; files],
            action: ActionVector::first(files, capacity)?,
        })
    }

    pub fn memory(&self) -> &[f64] {
        &self.memory
    }
}

impl LeafPolicy for SmoothingPolicy {
    fn action(&self) -> &ActionVector {
        &self.action
    }

    fn observe(&mut self, requests: &[f64]) -> Result<()> {
        check_len(requests.len(), self.memory.len())?;
        for (m, &r) in self.memory.iter_mut().zip(requests) {
            *m = self.rho * r + (1.0 - self.rho) * *m;
        }
        self.action = top_m_action(&self.memory, self.capacity)?;
        Ok(())
    }

    /// Top-`M` of `state`: the smoothing fixed point under a constant input.
    fn evaluate(&self, state: &[f64]) -> Result<ActionVector> {
        check_len(state.len(), self.memory.len())?;
        top_m_action(state, self.capacity)
    }

    fn box_clone(&self) -> Box<dyn LeafPolicy> {
        Box::new(self.clone())
    }
}

/// Caches the `M` files requested most recently (slot granularity; more
/// requests break ties within a slot, then the lower index).
#[derive(Debug, Clone)]
pub struct RecencyPolicy {
    capacity: usize,
    slot: u64,
    score: Vec<f64>,
    action: ActionVector,
}

impl RecencyPolicy {
    pub fn new(files: usize, capacity: usize) -> Result<Self> {
        Ok(RecencyPolicy {
            capacity,
            slot: 0,
            score: vec![0.0; files],
            action: ActionVector::first(files, capacity)?,
        })
    }
}

impl LeafPolicy for RecencyPolicy {
    fn action(&self) -> &ActionVector {
        &self.action
    }

    fn observe(&mut self, requests: &[f64]) -> Result<()> {
        check_len(requests.len(), self.score.len())?;
        self.slot += 1;
        let total: f64 = requests.iter().sum::<f64>() + 1.0;
        for (s, &r) in self.score.iter_mut().zip(requests) {
            if r > 0.0 {
                *s = self.slot as f64 + r / total;
            }
        }
        self.action = top_m_action(&self.score, self.capacity)?;
        Ok(())
    }

    fn evaluate(&self, state: &[f64]) -> Result<ActionVector> {
        check_len(state.len(), self.score.len())?;
        let total: f64 = state.iter().sum::<f64>() + 1.0;
        let next = (self.slot + 1) as f64;
        let score: Vec<f64> = self
            .score
            .iter()
            .zip(state)
            .map(|(&s, &r)| if r > 0.0 { next + r / total } else { s })
            .collect();
        top_m_action(&score, self.capacity)
    }

    fn box_clone(&self) -> Box<dyn LeafPolicy> {
        Box::new(self.clone())
    }
}

/// Weighted unserved demand seen by the parent at the end of an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentState(Vec<f64>);

impl ParentState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("parent state entries must be finite and nonnegative"));
        }
        Ok(ParentState(values))
    }

    pub fn zeros(files: usize) -> Self {
        ParentState(vec![0.0; files])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// What a leaf forwards at the end of an interval: its mean request vector and
/// the files its policy keeps for that mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafReport {
    pub mean_requests: Vec<f64>,
    pub cached: ActionVector,
}

/// `s0 = sum_n w_n sbar_n (1 - pi_n(sbar_n))`.
///
/// `reports[n]` is `None` when leaf `n` has not reported.
pub fn aggregate_state(reports: &[Option<LeafReport>], weights: &[f64]) -> Result<ParentState> {
    if reports.len() != weights.len() {
        return Err(Error::IncompleteInterval(format!(
            "{} reports for {} weights",
            reports.len(),
            weights.len()
        )));
    }
    let mut s0: Option<Vec<f64>> = None;
    for (n, (report, &w)) in reports.iter().zip(weights).enumerate() {
        let report = report
            .as_ref()
            .ok_or_else(|| Error::IncompleteInterval(format!("leaf {n} did not report")))?;
        check_len(report.mean_requests.len(), report.cached.len())?;
        let acc = s0.get_or_insert_with(|| vec![0.0; report.mean_requests.len()]);
        check_len(acc.len(), report.mean_requests.len())?;
        for ((a, &s), &b) in acc.iter_mut().zip(&report.mean_requests).zip(report.cached.bits()) {
            *a += w * s * f64::from(1 - b);
        }
    }
    let s0 = s0.ok_or_else(|| Error::IncompleteInterval("no leaves".into()))?;
    ParentState::new(s0)
}

/// One leaf slot: the action in force and the requests that arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub action: ActionVector,
    pub requests: RequestVector,
}

/// `(1/T) sum_t leaf_cost(a_n(t), r_n(t), a0)`.
pub fn slot_avg_cost(slots: &[SlotRecord], slots_per_interval: usize, a0: &ActionVector) -> Result<Vec<f64>> {
    if slots.len() != slots_per_interval || slots.is_empty() {
        return Err(Error::IncompleteInterval(format!(
            "{} slot records, expected {slots_per_interval}",
            slots.len()
        )));
    }
    let mut acc = vec![0.0; a0.len()];
    for slot in slots {
        let c = leaf_cost(&slot.action, &slot.requests.as_f64(), a0)?;
        acc.iter_mut().zip(c).for_each(|(a, x)| *a += x);
    }
    let t = slots.len() as f64;
    Ok(acc.into_iter().map(|x| x / t).collect())
}

/// `c0 = sum_n w_n cbar_n`.
pub fn parent_cost(leaf_costs: &[Option<Vec<f64>>], weights: &[f64]) -> Result<Vec<f64>> {
    if leaf_costs.len() != weights.len() || leaf_costs.is_empty() {
        return Err(Error::IncompleteInterval(format!(
            "{} leaf costs for {} weights",
            leaf_costs.len(),
            weights.len()
        )));
    }
    let mut acc: Option<Vec<f64>> = None;
    for (n, (c, &w)) in leaf_costs.iter().zip(weights).enumerate() {
        let c = c
            .as_ref()
            .ok_or_else(|| Error::IncompleteInterval(format!("leaf {n} did not report")))?;
        let a = acc.get_or_insert_with(|| vec![0.0; c.len()]);
        check_len(a.len(), c.len())?;
        a.iter_mut().zip(c).for_each(|(a, &x)| *a += w * x);
    }
    Ok(acc.unwrap_or_default())
}

/// Static description of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub files: usize,
    pub parent_capacity: usize,
    pub leaf_capacities: Vec<usize>,
    pub slots_per_interval: usize,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub requests_per_slot: u64,
}

impl NetworkConfig {
    /// `num_leaves` identical leaves with weights `1/N`.
    pub fn uniform(
        num_leaves: usize,
        files: usize,
        parent_capacity: usize,
        leaf_capacity: usize,
        slots_per_interval: usize,
        requests_per_slot: u64,
        gamma: f64,
    ) -> Self {
        NetworkConfig {
            files,
            parent_capacity,
            leaf_capacities: vec![leaf_capacity; num_leaves],
            slots_per_interval,
            weights: vec![1.0 / num_leaves.max(1) as f64; num_leaves],
            gamma,
            requests_per_slot,
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_capacities.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.files == 0 {
            return Err(Error::invalid("network needs at least one file"));
        }
        if self.parent_capacity > self.files {
            return Err(Error::invalid(format!(
                "parent capacity {} exceeds {} files",
                self.parent_capacity, self.files
            )));
        }
        if self.leaf_capacities.is_empty() {
            return Err(Error::invalid("network needs at least one leaf"));
        }
        if let Some(m) = self.leaf_capacities.iter().find(|&&m| m > self.files) {
            return Err(Error::invalid(format!("leaf capacity {m} exceeds {} files", self.files)));
        }
        if self.weights.len() != self.leaf_capacities.len() {
            return Err(Error::invalid("one weight per leaf required"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if self.slots_per_interval == 0 {
            return Err(Error::invalid("intervals need at least one slot"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("discount {} outside [0, 1)", self.gamma)));
        }
        Ok(())
    }

    /// Weighted slot-averaged request volume per interval, `R sum_n w_n`.
    pub fn requests_per_interval(&self) -> f64 {
        self.requests_per_slot as f64 * self.weights.iter().sum::<f64>()
    }
}

/// How leaf popularity chains are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafChainSpec {
    pub states: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    /// Probability of staying in the current state each slot; the remaining
    /// mass is spread by a random row.
    pub persistence: f64,
    /// Draw one set of profiles for the whole network; each leaf still gets
    /// its own transition matrix and starting state.
    #[serde(default)]
    pub shared_profiles: bool,
}

impl Default for LeafChainSpec {
    fn default() -> Self {
        LeafChainSpec {
            states: 3,
            eta_min: 0.8,
            eta_max: 1.2,
            persistence: 0.9,
            shared_profiles: false,
        }
    }
}

impl LeafChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 {
            return Err(Error::invalid("leaf chains need at least one state"));
        }
        if !(self.eta_min >= 0.0 && self.eta_min <= self.eta_max && self.eta_max.is_finite()) {
            return Err(Error::invalid("leaf eta range must satisfy 0 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.persistence) {
            return Err(Error::invalid("persistence outside [0, 1]"));
        }
        Ok(())
    }

    /// Zipf profiles with exponents from the configured range and random
    /// orderings.
    pub fn draw_profiles<R: Rng + ?Sized>(&self, files: usize, rng: &mut R) -> Result<Vec<ProbVector>> {
        self.validate()?;
        (0..self.states)
            .map(|_| {
                let eta = if self.eta_max > self.eta_min {
                    rng.gen_range(self.eta_min..self.eta_max)
                } else {
                    self.eta_min
                };
                zipf_profile(files, eta, &random_ordering(files, rng))
            })
            .collect()
    }

    /// Independent chain with its own Zipf orderings.
    pub fn draw<R: Rng + ?Sized>(&self, files: usize, rng: &mut R) -> Result<PopularityChain> {
        let states = self.draw_profiles(files, rng)?;
        self.draw_with_profiles(states, rng)
    }

    /// Chain over the given profiles with a random sticky transition matrix.
    pub fn draw_with_profiles<R: Rng + ?Sized>(
        &self,
        states: Vec<ProbVector>,
        rng: &mut R,
    ) -> Result<PopularityChain> {
        self.validate()?;
        let n = states.len();
        let transition = (0..n)
            .map(|i| {
                let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                (0..n)
                    .map(|j| {
                        let stay = if i == j { self.persistence } else { 0.0 };
                        stay + (1.0 - self.persistence) * raw[j] / total
                    })
                    .collect()
            })
            .collect();
        PopularityChain::new(states, transition)
    }
}

/// A leaf cache with its popularity process and local policy.
#[derive(Clone)]
pub struct LeafNode {
    pub id: usize,
    pub capacity: usize,
    pub chain: PopularityChain,
    pub chain_state: usize,
    pub policy: Box<dyn LeafPolicy>,
}

impl LeafNode {
    pub fn current_action(&self) -> &ActionVector {
        self.policy.action()
    }
}

/// Everything the leaves did during one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord {
    /// `slots[n][t]`
    pub slots: Vec<Vec<SlotRecord>>,
    pub reports: Vec<LeafReport>,
}

impl IntervalRecord {
    pub fn state(&self, weights: &[f64]) -> Result<ParentState> {
        let reports: Vec<Option<LeafReport>> = self.reports.iter().cloned().map(Some).collect();
        aggregate_state(&reports, weights)
    }

    /// Per-file parent cost of holding `a0` during this interval.
    pub fn cost(&self, a0: &ActionVector, weights: &[f64]) -> Result<Vec<f64>> {
        let leaf_costs = self
            .slots
            .iter()
            .map(|s| slot_avg_cost(s, s.len(), a0).map(Some))
            .collect::<Result<Vec<_>>>()?;
        parent_cost(&leaf_costs, weights)
    }

    /// Weighted slot-averaged leaf misses `D`; the parent cost of any `a0`
    /// equals `D (2 - a0)` entrywise.
    pub fn leaf_misses(&self, weights: &[f64]) -> Result<Vec<f64>> {
        check_len(self.slots.len(), weights.len())?;
        let files = self.reports.first().map_or(0, |r| r.mean_requests.len());
        let mut d = vec![0.0; files];
        for (slots, &w) in self.slots.iter().zip(weights) {
            let scale = w / slots.len() as f64;
            for slot in slots {
                for ((acc, &r), &b) in d.iter_mut().zip(&slot.requests.0).zip(slot.action.bits()) {
                    if b == 0 {
                        *acc += scale * r as f64;
                    }
                }
            }
        }
        Ok(d)
    }

    /// Leaf-miss requests as individual weighted events, slot by slot, in a
    /// random order within each slot.
    pub fn miss_events<R: Rng + ?Sized>(&self, weights: &[f64], rng: &mut R) -> Result<Vec<(usize, f64)>> {
        check_len(self.slots.len(), weights.len())?;
        let slots = self.slots.first().map_or(0, Vec::len);
        let mut events = Vec::new();
        for t in 0..slots {
            let start = events.len();
            for (leaf, &w) in self.slots.iter().zip(weights) {
                let slot = &leaf[t];
                let weight = w / leaf.len() as f64;
                for (f, (&r, &b)) in slot.requests.0.iter().zip(slot.action.bits()).enumerate() {
                    if b == 0 {
                        events.extend(std::iter::repeat_n((f, weight), r as usize));
                    }
                }
            }
            events[start..].shuffle(rng);
        }
        Ok(events)
    }
}

/// Total network cost `sum_f D_f (2 - a0_f)` from precomputed leaf misses.
pub fn network_cost(leaf_misses: &[f64], a0: &ActionVector) -> Result<f64> {
    check_len(leaf_misses.len(), a0.len())?;
    Ok(leaf_misses
        .iter()
        .zip(a0.bits())
        .map(|(&d, &b)| d * (2.0 - f64::from(b)))
        .sum())
}

/// Result of [`Network::run_interval`].
#[derive(Debug, Clone)]
pub struct IntervalOutcome {
    pub state: ParentState,
    pub cost: Vec<f64>,
    pub record: IntervalRecord,
}

/// Leaves plus their randomness.
#[derive(Clone)]
pub struct Network {
    config: NetworkConfig,
    leaves: Vec<LeafNode>,
    rng: SimRng,
}

impl Network {
    pub fn new(config: NetworkConfig, leaves: Vec<LeafNode>, rng: SimRng) -> Result<Self> {
        config.validate()?;
        if leaves.len() != config.num_leaves() {
            return Err(Error::invalid(format!(
                "{} leaves for {} configured",
                leaves.len(),
                config.num_leaves()
            )));
        }
        for (leaf, &m) in leaves.iter().zip(&config.leaf_capacities) {
            if leaf.chain.num_files() != config.files || leaf.current_action().len() != config.files {
                return Err(Error::invalid(format!("leaf {} has the wrong file count", leaf.id)));
            }
            if leaf.current_action().capacity() != m {
                return Err(Error::invalid(format!("leaf {} capacity mismatch", leaf.id)));
            }
        }
        Ok(Network { config, leaves, rng })
    }

    /// Leaves with independent chains drawn from `chains` and smoothing
    /// policies; chain draws use `instance_rng`, simulation uses `rng`.
    pub fn with_smoothing_leaves<R: Rng + ?Sized>(
        config: NetworkConfig,
        chains: &LeafChainSpec,
        rho: f64,
        instance_rng: &mut R,
        rng: SimRng,
    ) -> Result<Self> {
        config.validate()?;
        let shared = if chains.shared_profiles {
            Some(chains.draw_profiles(config.files, instance_rng)?)
        } else {
            None
        };
        let leaves = config
            .leaf_capacities
            .iter()
            .enumerate()
            .map(|(id, &m)| {
                let chain = match &shared {
                    Some(p) => chains.draw_with_profiles(p.clone(), instance_rng)?,
                    None => chains.draw(config.files, instance_rng)?,
                };
                let chain_state = instance_rng.gen_range(0..chain.num_states());
                Ok(LeafNode {
                    id,
                    capacity: m,
                    chain,
                    chain_state,
                    policy: Box::new(SmoothingPolicy::new(config.files, m, rho)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(config, leaves, rng)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn leaves(&self) -> &[LeafNode] {
        &self.leaves
    }

    /// Runs `T` slots at every leaf. Each slot: the leaf acts on what it has
    /// seen, requests arrive from the current chain state, the leaf observes
    /// them and the chain moves on.
    pub fn simulate_interval(&mut self) -> Result<IntervalRecord> {
        let t_max = self.config.slots_per_interval;
        let r = self.config.requests_per_slot;
        let mut slots = Vec::with_capacity(self.leaves.len());
        let mut reports = Vec::with_capacity(self.leaves.len());
        for leaf in &mut self.leaves {
            let mut records = Vec::with_capacity(t_max);
            let mut mean = vec![0.0; self.config.files];
            for _ in 0..t_max {
                let action = leaf.policy.action().clone();
                let requests = sample_requests(leaf.chain.state(leaf.chain_state), r, &mut self.rng);
                let counts = requests.as_f64();
                leaf.policy.observe(&counts)?;
                mean.iter_mut().zip(&counts).for_each(|(m, c)| *m += c);
                leaf.chain_state = step_chain(&leaf.chain, leaf.chain_state, &mut self.rng)?;
                records.push(SlotRecord { action, requests });
            }
            mean.iter_mut().for_each(|m| *m /= t_max as f64);
            let cached = leaf.policy.evaluate(&mean)?;
            reports.push(LeafReport {
                mean_requests: mean,
                cached,
            });
            slots.push(records);
        }
        Ok(IntervalRecord { slots, reports })
    }

    /// One interval under parent action `a0`.
    pub fn run_interval(&mut self, a0: &ActionVector) -> Result<IntervalOutcome> {
        check_len(a0.len(), self.config.files)?;
        if a0.capacity() != self.config.parent_capacity {
            return Err(Error::invalid(format!(
                "parent action caches {} files, capacity is {}",
                a0.capacity(),
                self.config.parent_capacity
            )));
        }
        let record = self.simulate_interval()?;
        let state = record.state(&self.config.weights)?;
        let cost = record.cost(a0, &self.config.weights)?;
        Ok(IntervalOutcome { state, cost, record })
    }
}

/// A classical replacement policy at the parent, fed the leaf-miss stream.
#[derive(Debug, Clone)]
pub struct ParentBaseline {
    cache: EvictionCache,
}

impl ParentBaseline {
    pub fn new(policy: EvictionPolicy, files: usize, capacity: usize) -> Self {
        ParentBaseline {
            cache: EvictionCache::new(policy, files, capacity),
        }
    }

    pub fn policy(&self) -> EvictionPolicy {
        self.cache.policy()
    }

    /// Network cost of one interval: every leaf miss costs its weight, plus
    /// its weight again when the parent also misses.
    pub fn serve_interval(&mut self, events: &[(usize, f64)]) -> Result<f64> {
        let mut cost = 0.0;
        for &(f, w) in events {
            let hit = self.cache.serve(f)?;
            cost += if hit { w } else { 2.0 * w };
        }
        Ok(cost)
    }
}
