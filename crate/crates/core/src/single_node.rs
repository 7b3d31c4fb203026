//! Single small-base-station environment: two popularity chains, the
//! three-part caching cost, and slot-by-slot evolution.

use serde::{Deserialize, Serialize};

use crate::cache::{check_len, enumerate_actions, random_action, ActionSet, ActionVector};
use crate::error::{Error, Result};
use crate::popularity::{
    empirical_profile, sample_requests, step_chain, PopularityChain, ProbVector,
};
use crate::rng::{stream, SimRng, Stream};

/// Weights of the refresh, local-miss and global-miss costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl CostWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = CostWeights {
            lambda1,
            lambda2,
            lambda3,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Named weight settings: `s1`..`s3` for the small instance and `s4`..`s6`
    /// for the large one.
    pub fn preset(name: &str) -> Option<Self> {
        let (a, b, c) = match name {
            "s1" => (10.0, 600.0, 1000.0),
            "s2" => (600.0, 10.0, 1000.0),
            "s3" => (10.0, 10.0, 1000.0),
            "s4" => (100.0, 20.0, 20.0),
            "s5" => (0.0, 0.0, 1000.0),
            "s6" => (0.0, 1000.0, 600.0),
            _ => return None,
        };
        Some(CostWeights {
            lambda1: a,
            lambda2: b,
            lambda3: c,
        })
    }

    pub fn scaled(&self, k: f64) -> Self {
        CostWeights {
            lambda1: self.lambda1 * k,
            lambda2: self.lambda2 * k,
            lambda3: self.lambda3 * k,
        }
    }
}

/// `lambda1 * a_new^T (1 - a_old)`.
pub fn refresh_cost(a_new: &ActionVector, a_old: &ActionVector, lambda1: f64) -> Result<f64> {
    Ok(lambda1 * a_new.newly_fetched(a_old)? as f64)
}

fn uncached_mass(a: &ActionVector, p: &ProbVector) -> Result<f64> {
    check_len(a.len(), p.len())?;
    Ok(a
        .bits()
        .iter()
        .zip(p.as_slice())
        .map(|(&b, &q)| f64::from(1 - b) * q)
        .sum())
}

/// `lambda2 * (1 - a)^T p_L`.
pub fn local_miss_cost(a: &ActionVector, p_local: &ProbVector, lambda2: f64) -> Result<f64> {
    Ok(lambda2 * uncached_mass(a, p_local)?)
}

/// `lambda3 * (1 - a)^T p_G`.
pub fn global_miss_cost(a: &ActionVector, p_global: &ProbVector, lambda3: f64) -> Result<f64> {
    Ok(lambda3 * uncached_mass(a, p_global)?)
}

/// Cost of moving from `a_old` to `a_new` when the new slot reveals
/// `p_global`/`p_local`. Summed refresh, then local, then global.
pub fn aggregate_cost(
    a_old: &ActionVector,
    a_new: &ActionVector,
    p_global: &ProbVector,
    p_local: &ProbVector,
    w: &CostWeights,
) -> Result<f64> {
    let c1 = refresh_cost(a_new, a_old, w.lambda1)?;
    let c2 = local_miss_cost(a_new, p_local, w.lambda2)?;
    let c3 = global_miss_cost(a_new, p_global, w.lambda3)?;
    Ok(c1 + c2 + c3)
}

/// Chain-state indices plus the cached contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    pub global_idx: usize,
    pub local_idx: usize,
    pub action: ActionVector,
}

/// How the local profile is revealed to the agent each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevealMode {
    /// The true chain state.
    #[default]
    Chain,
    /// Empirical profile of the slot's sampled requests; the agent sees the
    /// nearest chain state.
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub files: usize,
    pub capacity: usize,
    pub weights: CostWeights,
    pub gamma: f64,
    pub global: PopularityChain,
    pub local: PopularityChain,
    pub requests_per_slot: u64,
    pub reveal: RevealMode,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.files == 0 {
            return Err(Error::invalid("file count must be positive"));
        }
        if self.capacity > self.files {
            return Err(Error::invalid(format!(
                "capacity {} exceeds {} files",
                self.capacity, self.files
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        self.weights.validate()?;
        if self.global.num_files() != self.files || self.local.num_files() != self.files {
            return Err(Error::invalid("chain profile length differs from file count"));
        }
        Ok(())
    }
}

/// Row-major indexing of (global idx, local idx, action idx).
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub n_global: usize,
    pub n_local: usize,
    pub actions: ActionSet,
}

impl StateSpace {
    pub fn new(n_global: usize, n_local: usize, files: usize, capacity: usize) -> Result<Self> {
        Ok(StateSpace {
            n_global,
            n_local,
            actions: enumerate_actions(files, capacity)?,
        })
    }

    pub fn for_env(cfg: &EnvConfig) -> Result<Self> {
        Self::new(cfg.global.num_states(), cfg.local.num_states(), cfg.files, cfg.capacity)
    }

    pub fn num_states(&self) -> usize {
        self.n_global * self.n_local * self.actions.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn index_parts(&self, g: usize, l: usize, a: usize) -> usize {
        (g * self.n_local + l) * self.actions.len() + a
    }

    pub fn index(&self, s: &SystemState) -> Result<usize> {
        let a = self
            .actions
            .index_of(&s.action)
            .ok_or_else(|| Error::invalid("state action not in action set"))?;
        if s.global_idx >= self.n_global || s.local_idx >= self.n_local {
            return Err(Error::invalid("state chain index out of range"));
        }
        Ok(self.index_parts(s.global_idx, s.local_idx, a))
    }

    /// Inverse of [`StateSpace::index_parts`].
    pub fn decode(&self, idx: usize) -> (usize, usize, usize) {
        let na = self.actions.len();
        let a = idx % na;
        let gl = idx / na;
        (gl / self.n_local, gl % self.n_local, a)
    }

    pub fn state(&self, idx: usize) -> SystemState {
        let (g, l, a) = self.decode(idx);
        SystemState {
            global_idx: g,
            local_idx: l,
            action: self.actions.get(a).clone(),
        }
    }
}

/// What one slot revealed.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: SystemState,
    pub cost: f64,
    pub p_global: ProbVector,
    pub p_local: ProbVector,
}

/// Mutable environment; owns its random streams.
#[derive(Debug, Clone)]
pub struct SingleNodeEnv {
    cfg: EnvConfig,
    state: SystemState,
    true_local: usize,
    last_local: ProbVector,
    global_rng: SimRng,
    local_rng: SimRng,
    request_rng: SimRng,
}

impl SingleNodeEnv {
    /// Environment with a random initial state drawn from the seed's
    /// initial-state stream.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = stream(seed, Stream::Initial);
        use rand::Rng;
        let g = init.gen_range(0..cfg.global.num_states());
        let l = init.gen_range(0..cfg.local.num_states());
        let action = random_action(cfg.files, cfg.capacity, &mut init)?;
        Self::with_state(
            cfg,
            SystemState {
                global_idx: g,
                local_idx: l,
                action,
            },
            seed,
        )
    }

    pub fn with_state(cfg: EnvConfig, state: SystemState, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if state.action.len() != cfg.files || state.action.capacity() != cfg.capacity {
            return Err(Error::invalid("initial action does not match configuration"));
        }
        if state.global_idx >= cfg.global.num_states() || state.local_idx >= cfg.local.num_states() {
            return Err(Error::invalid("initial chain index out of range"));
        }
        let last_local = cfg.local.state(state.local_idx).clone();
        Ok(SingleNodeEnv {
            true_local: state.local_idx,
            last_local,
            state,
            global_rng: stream(seed, Stream::GlobalChain),
            local_rng: stream(seed, Stream::LocalChain),
            request_rng: stream(seed, Stream::Requests),
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    /// Places `a_new`, advances both chains and charges the slot's cost.
    pub fn step(&mut self, a_new: &ActionVector) -> Result<StepOutcome> {
        if a_new.len() != self.cfg.files || a_new.capacity() != self.cfg.capacity {
            return Err(Error::invalid("action does not match configuration"));
        }
        let g = step_chain(&self.cfg.global, self.state.global_idx, &mut self.global_rng)?;
        self.true_local = step_chain(&self.cfg.local, self.true_local, &mut self.local_rng)?;
        let p_global = self.cfg.global.state(g).clone();
        let (p_local, l) = match self.cfg.reveal {
            RevealMode::Chain => (self.cfg.local.state(self.true_local).clone(), self.true_local),
            RevealMode::Empirical => {
                let requests = sample_requests(
                    self.cfg.local.state(self.true_local),
                    self.cfg.requests_per_slot,
                    &mut self.request_rng,
                );
                let p = match empirical_profile(&requests) {
                    Ok(p) => p,
                    Err(Error::NoRequests) => self.last_local.clone(),
                    Err(e) => return Err(e),
                };
                let l = self.cfg.local.nearest_state(&p);
                (p, l)
            }
        };
        let cost = aggregate_cost(&self.state.action, a_new, &p_global, &p_local, &self.cfg.weights)?;
        self.last_local = p_local.clone();
        self.state = SystemState {
            global_idx: g,
            local_idx: l,
            action: a_new.clone(),
        };
        Ok(StepOutcome {
            state: self.state.clone(),
            cost,
            p_global,
            p_local,
        })
    }
}
