//! Declarative experiment configuration (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cache::MAX_ENUMERATED_FILES;
use crate::dqn::DqnConfig;
use crate::error::{Error, Result};
use crate::harness::network_run::{CostScale, NetworkRunConfig};
use crate::linear::StepSizes;
use crate::mdp::MAX_STATE_ACTIONS;
use crate::network::{LeafChainSpec, NetworkConfig, SmoothingPolicy};
use crate::popularity::{chain_from_etas, random_chain, PopularityChain};
use crate::rng::Stream;
use crate::schedule::{BetaSchedule, EpsilonSchedule};
use crate::single_node::{CostWeights, EnvConfig, RevealMode};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CACHELEARN_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SingleNodeTabular,
    SingleNodeLinear,
    SingleNodeOracle,
    NetworkDqn,
    NetworkBaselines,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleNodeTabular => "single-node-tabular",
            Scenario::SingleNodeLinear => "single-node-linear",
            Scenario::SingleNodeOracle => "single-node-oracle",
            Scenario::NetworkDqn => "network-dqn",
            Scenario::NetworkBaselines => "network-baselines",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, Scenario::NetworkDqn | Scenario::NetworkBaselines)
    }
}

fn default_requests() -> u64 {
    100
}

fn default_gamma() -> f64 {
    0.9
}

/// Single-cache environment. Chains come from `*_etas` (one state per
/// exponent) or from `*_states` random states with exponents in
/// `*_eta_range`, drawn from the seed's instance stream, unless pinned by a
/// chain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleNodeSection {
    pub files: usize,
    pub capacity: usize,
    /// One of `s1`..`s6`; mutually exclusive with `lambda`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub lambda: Option<[f64; 3]>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_requests")]
    pub requests_per_slot: u64,
    #[serde(default)]
    pub reveal: RevealMode,
    #[serde(default)]
    pub global_etas: Vec<f64>,
    #[serde(default)]
    pub local_etas: Vec<f64>,
    #[serde(default)]
    pub global_states: Option<usize>,
    #[serde(default)]
    pub local_states: Option<usize>,
    #[serde(default)]
    pub global_eta_range: Option<[f64; 2]>,
    #[serde(default)]
    pub local_eta_range: Option<[f64; 2]>,
    #[serde(default)]
    pub global_chain: Option<PathBuf>,
    #[serde(default)]
    pub local_chain: Option<PathBuf>,
    /// Simulate the optimal policy alongside; defaults to on when the
    /// state-action space can be tabulated.
    #[serde(default)]
    pub oracle_column: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularSection {
    pub beta: BetaSchedule,
    pub epsilon: EpsilonSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSection {
    pub alpha_g: f64,
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub epsilon: EpsilonSchedule,
}

impl Default for LinearSection {
    fn default() -> Self {
        let s = StepSizes::default();
        LinearSection {
            alpha_g: s.alpha_g,
            alpha_l: s.alpha_l,
            alpha_r: s.alpha_r,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl LinearSection {
    pub fn steps(&self) -> StepSizes {
        StepSizes {
            alpha_g: self.alpha_g,
            alpha_l: self.alpha_l,
            alpha_r: self.alpha_r,
        }
    }
}

fn default_rho() -> f64 {
    SmoothingPolicy::DEFAULT_RHO
}

fn default_slots() -> usize {
    2
}

fn default_network_gamma() -> f64 {
    DqnConfig::default().gamma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub leaves: usize,
    pub files: usize,
    pub parent_capacity: usize,
    pub leaf_capacity: usize,
    #[serde(default = "default_slots")]
    pub slots_per_interval: usize,
    #[serde(default = "default_requests")]
    pub requests_per_slot: u64,
    /// Defaults to `1/N` for every leaf.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub cost_scale: CostScale,
    /// Defaults to a linear decay from 1 to 0.05 over the first 20% of intervals.
    #[serde(default)]
    pub epsilon: Option<EpsilonSchedule>,
    /// Leaf count of the setting this preset was scaled down from.
    #[serde(default)]
    pub scaled_from: Option<usize>,
}


/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Slots for single-node scenarios, intervals for network ones.
    pub steps: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Shorthand for `seeds = [0, 1, ..., seed_count - 1]`.
    #[serde(default)]
    pub seed_count: Option<u64>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub single_node: Option<SingleNodeSection>,
    #[serde(default)]
    pub tabular: TabularSection,
    #[serde(default)]
    pub linear: LinearSection,
    #[serde(default)]
    pub network: Option<NetworkSection>,
    #[serde(default)]
    pub leaf_chains: LeafChainSpec,
    #[serde(default)]
    pub dqn: Option<DqnConfig>,
    /// Directory relative chain paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn field(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidArgument(m) => Error::config(path, m),
        Error::InvalidPartition { got, expected } => {
            Error::config(path, format!("group sizes sum to {got}, expected {expected}"))
        }
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates `path`; chain files resolve relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The seeds to run, in order.
    pub fn seed_list(&self) -> Vec<u64> {
        if !self.seeds.is_empty() {
            self.seeds.clone()
        } else {
            (0..self.seed_count.unwrap_or(0)).collect()
        }
    }

    pub fn run_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.scenario.name().to_string())
    }

    /// `--out-dir`, then the config's `output`, then the environment, then
    /// `results`.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output {
            return if p.is_absolute() { p.clone() } else { self.base_dir.join(p) };
        }
        std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// SHA-256 of the normalized configuration, excluding the output location.
    pub fn hash(&self) -> Result<String> {
        let mut normalized = self.clone();
        normalized.output = None;
        let json = serde_json::to_string(&normalized)?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() && self.seed_count.unwrap_or(0) == 0 {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if !self.seeds.is_empty() && self.seed_count.is_some() {
            return Err(Error::config("seed_count", "give either seeds or seed_count, not both"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be positive"));
        }
        if self.scenario.is_network() {
            let n = self
                .network
                .as_ref()
                .ok_or_else(|| Error::config("network", "section required for network scenarios"))?;
            if n.leaves == 0 {
                return Err(Error::config("network.leaves", "must be positive"));
            }
            if n.files == 0 {
                return Err(Error::config("network.files", "must be positive"));
            }
            if n.parent_capacity > n.files {
                return Err(Error::config("network.parent_capacity", "exceeds network.files"));
            }
            if n.leaf_capacity > n.files {
                return Err(Error::config("network.leaf_capacity", "exceeds network.files"));
            }
            if let Some(w) = &n.weights {
                if w.len() != n.leaves {
                    return Err(Error::config("network.weights", "one weight per leaf required"));
                }
            }
            self.leaf_chains.validate().map_err(field("leaf_chains"))?;
            if self.scenario == Scenario::NetworkDqn {
                let d = self
                    .dqn
                    .as_ref()
                    .ok_or_else(|| Error::config("dqn", "section required for network-dqn"))?;
                d.validate(n.files).map_err(field("dqn"))?;
            }
            self.network_run()?.validate().map_err(field("network"))?;
        } else {
            let s = self
                .single_node
                .as_ref()
                .ok_or_else(|| Error::config("single_node", "section required for single-node scenarios"))?;
            if s.files == 0 {
                return Err(Error::config("single_node.files", "must be positive"));
            }
            if s.capacity > s.files {
                return Err(Error::config(
                    "single_node.capacity",
                    format!("capacity {} exceeds {} files", s.capacity, s.files),
                ));
            }
            self.weights()?;
            if !(0.0..1.0).contains(&s.gamma) {
                return Err(Error::config("single_node.gamma", "must lie in [0, 1)"));
            }
            for (side, etas, states, range, pinned) in [
                ("global", &s.global_etas, s.global_states, s.global_eta_range, &s.global_chain),
                ("local", &s.local_etas, s.local_states, s.local_eta_range, &s.local_chain),
            ] {
                let sources = usize::from(!etas.is_empty()) + usize::from(states.is_some()) + usize::from(pinned.is_some());
                if sources != 1 {
                    return Err(Error::config(
                        format!("single_node.{side}_etas"),
                        format!("give exactly one of {side}_etas, {side}_states or {side}_chain"),
                    ));
                }
                if states.is_some() && range.is_none() {
                    return Err(Error::config(
                        format!("single_node.{side}_eta_range"),
                        format!("required with {side}_states"),
                    ));
                }
                if etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                    return Err(Error::config(format!("single_node.{side}_etas"), "must be finite and nonnegative"));
                }
            }
            for (side, pinned) in [("global", &s.global_chain), ("local", &s.local_chain)] {
                if pinned.is_some() {
                    self.chain(side, 0)?;
                }
            }
            let tabulated = self.tabulated_size();
            let fits = tabulated.is_some_and(|n| n <= MAX_STATE_ACTIONS as f64);
            match self.scenario {
                Scenario::SingleNodeTabular | Scenario::SingleNodeOracle if !fits => {
                    return Err(Error::config(
                        "single_node.files",
                        format!("state-action space too large to tabulate (limit {MAX_STATE_ACTIONS} pairs)"),
                    ));
                }
                _ => {}
            }
            if s.oracle_column == Some(true) && !fits {
                return Err(Error::config("single_node.oracle_column", "instance too large for the oracle"));
            }
            self.tabular.beta.validate().map_err(field("tabular.beta"))?;
            self.tabular.epsilon.validate().map_err(field("tabular.epsilon"))?;
            self.linear.steps().validate().map_err(field("linear"))?;
            self.linear.epsilon.validate().map_err(field("linear.epsilon"))?;
        }
        Ok(())
    }

    /// `|S| |A|` when chain sizes are known up front.
    fn tabulated_size(&self) -> Option<f64> {
        let s = self.single_node.as_ref()?;
        if s.files > MAX_ENUMERATED_FILES {
            return None;
        }
        let g = if s.global_chain.is_some() { 1 } else { s.global_states.unwrap_or(s.global_etas.len()) };
        let l = if s.local_chain.is_some() { 1 } else { s.local_states.unwrap_or(s.local_etas.len()) };
        let a = binomial(s.files, s.capacity);
        Some(g as f64 * l as f64 * a * a)
    }

    /// Whether single-node runs also simulate the optimal policy.
    pub fn wants_oracle(&self) -> bool {
        let Some(s) = &self.single_node else { return false };
        let fits = self.tabulated_size().is_some_and(|n| n <= MAX_STATE_ACTIONS as f64);
        s.oracle_column.unwrap_or(fits) && fits
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let s = self
            .single_node
            .as_ref()
            .ok_or_else(|| Error::config("single_node", "section missing"))?;
        match (&s.preset, s.lambda) {
            (Some(_), Some(_)) => Err(Error::config("single_node.lambda", "give either preset or lambda")),
            (Some(p), None) => CostWeights::preset(p)
                .ok_or_else(|| Error::config("single_node.preset", format!("unknown preset `{p}` (expected s1..s6)"))),
            (None, Some([a, b, c])) => CostWeights::new(a, b, c).map_err(field("single_node.lambda")),
            (None, None) => Err(Error::config("single_node.preset", "give a preset or lambda")),
        }
    }

    fn chain(&self, side: &str, seed: u64) -> Result<PopularityChain> {
        let s = self
            .single_node
            .as_ref()
            .ok_or_else(|| Error::config("single_node", "section missing"))?;
        let (etas, states, range, pinned, offset) = if side == "global" {
            (&s.global_etas, s.global_states, s.global_eta_range, &s.global_chain, 0)
        } else {
            (&s.local_etas, s.local_states, s.local_eta_range, &s.local_chain, 1)
        };
        if let Some(p) = pinned {
            let path = if p.is_absolute() { p.clone() } else { self.base_dir.join(p) };
            let field = format!("single_node.{side}_chain");
            let text = fs::read_to_string(&path).map_err(|e| Error::config(&field, format!("{}: {e}", path.display())))?;
            let chain = PopularityChain::from_json(&text).map_err(|e| Error::config(&field, e.to_string()))?;
            if chain.num_files() != s.files {
                return Err(Error::config(field, "file count differs"));
            }
            return Ok(chain);
        }
        let mut rng = crate::rng::substream(seed, Stream::Instance, offset);
        match states {
            Some(n) => {
                let [lo, hi] = range.unwrap_or([1.0, 1.0]);
                random_chain(n, s.files, (lo, hi), &mut rng)
            }
            None => chain_from_etas(etas, s.files, &mut rng),
        }
    }

    /// Single-node environment for `seed`.
    pub fn env_config(&self, seed: u64) -> Result<EnvConfig> {
        let s = self
            .single_node
            .as_ref()
            .ok_or_else(|| Error::config("single_node", "section missing"))?;
        Ok(EnvConfig {
            files: s.files,
            capacity: s.capacity,
            weights: self.weights()?,
            gamma: s.gamma,
            global: self.chain("global", seed)?,
            local: self.chain("local", seed)?,
            requests_per_slot: s.requests_per_slot,
            reveal: s.reveal,
        })
    }

    /// Network run description (without the seed).
    pub fn network_run(&self) -> Result<NetworkRunConfig> {
        let n = self
            .network
            .as_ref()
            .ok_or_else(|| Error::config("network", "section missing"))?;
        let gamma = self.dqn.as_ref().map_or_else(default_network_gamma, |d| d.gamma);
        let mut network = NetworkConfig::uniform(
            n.leaves,
            n.files,
            n.parent_capacity,
            n.leaf_capacity,
            n.slots_per_interval,
            n.requests_per_slot,
            gamma,
        );
        if let Some(w) = &n.weights {
            network.weights = w.clone();
        }
        Ok(NetworkRunConfig {
            network,
            chains: self.leaf_chains,
            rho: n.rho,
            intervals: self.steps,
            dqn: if self.scenario == Scenario::NetworkDqn { self.dqn.clone() } else { None },
            epsilon: n.epsilon,
            cost_scale: n.cost_scale,
        })
    }

    /// Replaces the seed list.
    pub fn override_seeds(&mut self, seeds: Vec<u64>) {
        self.seeds = seeds;
        self.seed_count = None;
    }
}
