//! Two-level network scenarios: a DQN parent and the classical baselines,
//! all priced on one shared realization of the leaf world.

use serde::{Deserialize, Serialize};

use crate::cache::{top_m_action, ActionVector, EvictionPolicy};
use crate::dqn::{DqnConfig, Experience, HyperDqn, ReplayBuffer};
use crate::error::{Error, Result};
use crate::network::{network_cost, LeafChainSpec, Network, NetworkConfig, ParentBaseline, ParentState};
use crate::rng::{stream, Stream};
use crate::schedule::EpsilonSchedule;

/// Divisor applied to costs and states before they reach the agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostScale {
    None,
    /// Weighted request volume per interval.
    #[default]
    RequestsPerInterval,
    /// Mean per-file request volume per interval.
    PerFile,
    Factor { value: f64 },
}

impl CostScale {
    pub fn divisor(&self, network: &NetworkConfig) -> Result<f64> {
        let d = match *self {
            CostScale::None => 1.0,
            CostScale::RequestsPerInterval => network.requests_per_interval(),
            CostScale::PerFile => network.requests_per_interval() / network.files as f64,
            CostScale::Factor { value } => value,
        };
        if d > 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(Error::invalid(format!("cost scale divisor {d} must be positive")))
        }
    }
}

/// Everything a network run needs besides the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRunConfig {
    pub network: NetworkConfig,
    pub chains: LeafChainSpec,
    pub rho: f64,
    pub intervals: usize,
    /// `None` runs the baselines only.
    pub dqn: Option<DqnConfig>,
    /// Defaults to a linear decay from 1 to 0.05 over the first 20% of intervals.
    pub epsilon: Option<EpsilonSchedule>,
    pub cost_scale: CostScale,
}

impl NetworkRunConfig {
    pub fn epsilon(&self) -> EpsilonSchedule {
        self.epsilon.unwrap_or(EpsilonSchedule::Linear {
            start: 1.0,
            end: 0.05,
            steps: self.intervals / 5,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.chains.validate()?;
        if let Some(d) = &self.dqn {
            d.validate(self.network.files)?;
        }
        self.epsilon().validate()?;
        self.cost_scale.divisor(&self.network)?;
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid("rho must lie in (0, 1]"));
        }
        Ok(())
    }
}

pub const NETWORK_POLICIES: [&str; 6] = ["dqn", "lru", "lfu", "fifo", "noncausal", "no_cache"];

/// Per-interval network cost of every parent policy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkTrace {
    /// Column names, a subset of [`NETWORK_POLICIES`] in that order.
    pub policies: Vec<String>,
    /// `costs[p][tau]`
    pub costs: Vec<Vec<f64>>,
}

impl NetworkTrace {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.policies.iter().position(|p| p == name).map(|i| self.costs[i].as_slice())
    }
}

fn scaled(s: &ParentState, divisor: f64) -> Result<ParentState> {
    ParentState::new(s.as_slice().iter().map(|v| v / divisor).collect())
}

/// Simulates `intervals` intervals (after one warm-up interval that gives the
/// initial parent state and primes the baselines).
pub fn run_network(cfg: &NetworkRunConfig, seed: u64) -> Result<NetworkTrace> {
    cfg.validate()?;
    let net_cfg = &cfg.network;
    let (files, m0) = (net_cfg.files, net_cfg.parent_capacity);
    let weights = net_cfg.weights.clone();
    let divisor = cfg.cost_scale.divisor(net_cfg)?;
    let mut net = Network::with_smoothing_leaves(
        net_cfg.clone(),
        &cfg.chains,
        cfg.rho,
        &mut stream(seed, Stream::Instance),
        stream(seed, Stream::Leaves),
    )?;
    let mut agent = match &cfg.dqn {
        Some(d) => Some((
            HyperDqn::new(files, d, &mut stream(seed, Stream::NetInit))?,
            ReplayBuffer::new(d.replay())?,
            d.batch_size,
        )),
        None => None,
    };
    let epsilon = cfg.epsilon();
    let mut agent_rng = stream(seed, Stream::Agent);
    let mut replay_rng = stream(seed, Stream::Replay);
    let mut event_rng = stream(seed, Stream::Baselines);
    let mut baselines: Vec<ParentBaseline> = EvictionPolicy::ALL
        .iter()
        .map(|&p| ParentBaseline::new(p, files, m0))
        .collect();

    let warmup = net.simulate_interval()?;
    let mut state = warmup.state(&weights)?;
    let events = warmup.miss_events(&weights, &mut event_rng)?;
    for b in &mut baselines {
        b.serve_interval(&events)?;
    }

    let mut policies: Vec<String> = Vec::new();
    if agent.is_some() {
        policies.push("dqn".into());
    }
    policies.extend(["lru", "lfu", "fifo", "noncausal", "no_cache"].map(String::from));
    let mut costs = vec![Vec::with_capacity(cfg.intervals); policies.len()];

    for tau in 1..=cfg.intervals {
        let annotate = |e: Error| Error::Run {
            seed,
            step: tau,
            source: Box::new(e),
        };
        let decided: Option<ActionVector> = match &agent {
            Some((dqn, _, _)) => Some(
                dqn.select_action(&scaled(&state, divisor)?, m0, epsilon.at(tau), &mut agent_rng)
                    .map_err(annotate)?,
            ),
            None => None,
        };
        let record = net.simulate_interval().map_err(annotate)?;
        let misses = record.leaf_misses(&weights)?;
        let next = record.state(&weights)?;
        let mut row = Vec::with_capacity(policies.len());
        if let (Some(a), Some((dqn, buffer, batch))) = (decided, agent.as_mut()) {
            row.push(network_cost(&misses, &a)?);
            let cost: Vec<f64> = misses
                .iter()
                .zip(a.bits())
                .map(|(&d, &b)| d * (2.0 - f64::from(b)) / divisor)
                .collect();
            buffer.push(Experience::new(scaled(&state, divisor)?, a, cost, scaled(&next, divisor)?)?);
            dqn.train_batch(buffer, *batch, &mut replay_rng).map_err(annotate)?;
            dqn.maybe_sync_target()?;
        }
        let events = record.miss_events(&weights, &mut event_rng)?;
        for b in &mut baselines {
            row.push(b.serve_interval(&events)?);
        }
        row.push(network_cost(&misses, &top_m_action(&misses, m0)?)?);
        row.push(2.0 * misses.iter().sum::<f64>());
        for (col, v) in costs.iter_mut().zip(row) {
            col.push(v);
        }
        state = next;
    }
    Ok(NetworkTrace { policies, costs })
}
