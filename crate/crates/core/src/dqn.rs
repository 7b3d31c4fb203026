//! Parent-node deep Q-network: the file set is split into `K` contiguous
//! groups, each with its own small network (online and target copies), and
//! the per-file predicted costs are concatenated.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{check_len, random_action, top_m_action, ActionVector};
use crate::error::{Error, Result};
use crate::network::ParentState;
use crate::nn::{FeedforwardNet, GradientSet, Head};

/// `(s(tau), a(tau+1), c(tau+1), s(tau+1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub s_prev: ParentState,
    pub action: ActionVector,
    pub cost: Vec<f64>,
    pub s_new: ParentState,
}

impl Experience {
    pub fn new(s_prev: ParentState, action: ActionVector, cost: Vec<f64>, s_new: ParentState) -> Result<Self> {
        let f = s_prev.len();
        check_len(action.len(), f)?;
        check_len(cost.len(), f)?;
        check_len(s_new.len(), f)?;
        Ok(Experience {
            s_prev,
            action,
            cost,
            s_new,
        })
    }
}

/// FIFO experience store; `None` capacity keeps everything.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: Option<usize>,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: Option<usize>) -> Result<Self> {
        if capacity == Some(0) {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::new(),
        })
    }

    pub fn push(&mut self, e: Experience) {
        if let Some(cap) = self.capacity {
            while self.items.len() >= cap {
                self.items.pop_front();
            }
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    /// `n` independent uniform indices.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }
}

/// Agent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    /// Number of equal groups, used when `partition` is empty.
    pub groups: usize,
    pub partition: Vec<usize>,
    /// Hidden width as a multiple of the group size.
    pub hidden_factor: usize,
    pub head: Head,
    pub gamma: f64,
    pub batch_size: usize,
    pub sync_period: u64,
    pub learning_rate: f64,
    /// 0 keeps every experience.
    pub replay_capacity: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            groups: 1,
            partition: Vec::new(),
            hidden_factor: 2,
            head: Head::Linear,
            gamma: 0.5,
            batch_size: 32,
            sync_period: 50,
            learning_rate: 1e-3,
            replay_capacity: 10_000,
        }
    }
}

impl DqnConfig {
    /// Explicit partition, or `groups` near-equal contiguous blocks.
    pub fn partition_for(&self, files: usize) -> Result<Vec<usize>> {
        let p = if self.partition.is_empty() {
            let k = self.groups;
            if k == 0 || k > files {
                return Err(Error::invalid(format!("cannot split {files} files into {k} groups")));
            }
            (0..k).map(|i| files / k + usize::from(i < files % k)).collect()
        } else {
            self.partition.clone()
        };
        let got: usize = p.iter().sum();
        if got != files || p.contains(&0) {
            return Err(Error::InvalidPartition { got, expected: files });
        }
        Ok(p)
    }

    pub fn validate(&self, files: usize) -> Result<()> {
        self.partition_for(files)?;
        if self.hidden_factor == 0 {
            return Err(Error::invalid("hidden_factor must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("discount {} outside [0, 1)", self.gamma)));
        }
        if self.batch_size == 0 || self.sync_period == 0 {
            return Err(Error::invalid("batch_size and sync_period must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }

    pub fn replay(&self) -> Option<usize> {
        (self.replay_capacity > 0).then_some(self.replay_capacity)
    }
}

/// Contiguous split of `s` by group sizes.
pub fn partition_state<'a>(s: &'a [f64], partition: &[usize]) -> Result<Vec<&'a [f64]>> {
    let got: usize = partition.iter().sum();
    if got != s.len() {
        return Err(Error::InvalidPartition {
            got,
            expected: s.len(),
        });
    }
    let mut out = Vec::with_capacity(partition.len());
    let mut start = 0;
    for &k in partition {
        out.push(&s[start..start + k]);
        start += k;
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    partition: Vec<usize>,
    train_steps: u64,
    sync_period: u64,
    gamma: f64,
    learning_rate: f64,
    online: Vec<String>,
    target: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct HyperDqn {
    partition: Vec<usize>,
    online: Vec<FeedforwardNet>,
    target: Vec<FeedforwardNet>,
    gamma: f64,
    sync_period: u64,
    learning_rate: f64,
    train_steps: u64,
}

impl HyperDqn {
    /// Randomly initialized group nets `F_k -> hidden_factor F_k -> F_k`;
    /// targets start as copies.
    pub fn new<R: Rng + ?Sized>(files: usize, config: &DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate(files)?;
        let partition = config.partition_for(files)?;
        let online = partition
            .iter()
            .map(|&k| FeedforwardNet::random(&[k, config.hidden_factor * k, k], config.head, rng))
            .collect::<Result<Vec<_>>>()?;
        HyperDqn::from_nets(partition, online, config.gamma, config.sync_period, config.learning_rate)
    }

    /// Assembles an agent from explicit online nets.
    pub fn from_nets(
        partition: Vec<usize>,
        online: Vec<FeedforwardNet>,
        gamma: f64,
        sync_period: u64,
        learning_rate: f64,
    ) -> Result<Self> {
        if online.len() != partition.len() {
            return Err(Error::invalid("one network per group required"));
        }
        for (net, &k) in online.iter().zip(&partition) {
            if net.input_dim() != k || net.output_dim() != k {
                return Err(Error::invalid(format!("group of {k} files needs a {k}-in {k}-out net")));
            }
        }
        if sync_period == 0 || learning_rate.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::invalid("sync_period and learning_rate must be positive"));
        }
        let target = online.clone();
        Ok(HyperDqn {
            partition,
            online,
            target,
            gamma,
            sync_period,
            learning_rate,
            train_steps: 0,
        })
    }

    pub fn files(&self) -> usize {
        self.partition.iter().sum()
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    pub fn online(&self) -> &[FeedforwardNet] {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut [FeedforwardNet] {
        &mut self.online
    }

    pub fn target(&self) -> &[FeedforwardNet] {
        &self.target
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn predict_with(nets: &[FeedforwardNet], s: &[f64], partition: &[usize]) -> Result<Vec<f64>> {
        let mut o = Vec::with_capacity(s.len());
        for (net, block) in nets.iter().zip(partition_state(s, partition)?) {
            o.extend(net.forward(block)?);
        }
        Ok(o)
    }

    /// Concatenated online-network outputs.
    pub fn predict_costs(&self, s: &ParentState) -> Result<Vec<f64>> {
        Self::predict_with(&self.online, s.as_slice(), &self.partition)
    }

    pub fn predict_target(&self, s: &ParentState) -> Result<Vec<f64>> {
        Self::predict_with(&self.target, s.as_slice(), &self.partition)
    }

    /// Caches the `capacity` files with the largest predicted cost, or a
    /// uniformly random set with probability `epsilon`.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        s: &ParentState,
        capacity: usize,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<ActionVector> {
        let files = self.files();
        if capacity > files {
            return Err(Error::invalid(format!("capacity {capacity} exceeds {files} files")));
        }
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            return random_action(files, capacity, rng);
        }
        top_m_action(&self.predict_costs(s)?, capacity)
    }

    /// `[c + gamma Q(s_new; target) - Q(s_prev; online)] (1 - a)`.
    pub fn target_error(&self, e: &Experience) -> Result<Vec<f64>> {
        let q_prev = self.predict_costs(&e.s_prev)?;
        let q_next = self.predict_target(&e.s_new)?;
        Ok(q_prev
            .iter()
            .zip(&q_next)
            .zip(&e.cost)
            .zip(e.action.bits())
            .map(|(((&q, &qn), &c), &b)| (c + self.gamma * qn - q) * f64::from(1 - b))
            .collect())
    }

    /// One SGD step per group net on the mean masked loss of
    /// `min(batch, len)` uniformly drawn experiences. Returns the mean loss,
    /// or `None` (and changes nothing) when the buffer is empty.
    pub fn train_batch<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        batch: usize,
        rng: &mut R,
    ) -> Result<Option<f64>> {
        if buffer.is_empty() || batch == 0 {
            return Ok(None);
        }
        let picks = buffer.sample_indices(batch.min(buffer.len()), rng);
        let scale = 1.0 / picks.len() as f64;
        let mut grads: Vec<GradientSet> = self.online.iter().map(GradientSet::zeros_like).collect();
        let mut total = 0.0;
        for &i in &picks {
            let e = buffer.get(i).ok_or_else(|| Error::Internal("replay index out of range".into()))?;
            check_len(e.s_prev.len(), self.files())?;
            let q_next = self.predict_target(&e.s_new)?;
            let mask = e.action.miss_mask();
            let mut start = 0;
            let prev = partition_state(e.s_prev.as_slice(), &self.partition)?;
            for (k, &size) in self.partition.iter().enumerate() {
                let range = start..start + size;
                start += size;
                let m = &mask[range.clone()];
                if m.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let target: Vec<f64> = e.cost[range.clone()]
                    .iter()
                    .zip(&q_next[range])
                    .map(|(&c, &q)| c + self.gamma * q)
                    .collect();
                let (loss, g) = self.online[k].backward(prev[k], &target, m)?;
                total += loss;
                grads[k].add_scaled(&g, scale);
            }
        }
        for (net, g) in self.online.iter_mut().zip(&grads) {
            if !g.is_zero() {
                net.sgd_step(g, self.learning_rate)?;
            }
        }
        self.train_steps += 1;
        Ok(Some(total * scale))
    }

    /// Copies online into target when the training counter is a multiple of
    /// the sync period.
    pub fn maybe_sync_target(&mut self) -> Result<bool> {
        if !self.train_steps.is_multiple_of(self.sync_period) {
            return Ok(false);
        }
        for (src, dst) in self.online.iter().zip(self.target.iter_mut()) {
            src.clone_into(dst)?;
        }
        Ok(true)
    }

    /// Writes every group net plus `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names = |prefix: &str| (0..self.partition.len()).map(|k| format!("{prefix}{k}")).collect::<Vec<_>>();
        let (online, target) = (names("online"), names("target"));
        for (net, stem) in self.online.iter().zip(&online) {
            net.save(dir, stem)?;
        }
        for (net, stem) in self.target.iter().zip(&target) {
            net.save(dir, stem)?;
        }
        let manifest = Manifest {
            partition: self.partition.clone(),
            train_steps: self.train_steps,
            sync_period: self.sync_period,
            gamma: self.gamma,
            learning_rate: self.learning_rate,
            online,
            target,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        let load_all = |stems: &[String]| {
            stems
                .iter()
                .map(|s| FeedforwardNet::load(dir, s))
                .collect::<Result<Vec<_>>>()
        };
        let mut agent = HyperDqn::from_nets(m.partition, load_all(&m.online)?, m.gamma, m.sync_period, m.learning_rate)?;
        let target = load_all(&m.target)?;
        if target.len() != agent.online.len()
            || target.iter().zip(&agent.online).any(|(t, o)| t.sizes() != o.sizes())
        {
            return Err(Error::invalid("target nets do not match online nets"));
        }
        agent.target = target;
        agent.train_steps = m.train_steps;
        Ok(agent)
    }
}
