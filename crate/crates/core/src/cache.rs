//! Cache actions, action enumeration, and the classical eviction baselines.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::popularity::RequestVector;

/// Largest catalogue for which the full action set may be enumerated.
pub const MAX_ENUMERATED_FILES: usize = 20;

/// Binary cache-content vector holding exactly `capacity` files.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct ActionVector {
    bits: Vec<u8>,
    capacity: usize,
}

impl ActionVector {
    pub fn new(bits: Vec<u8>, capacity: usize) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("action entries must be 0 or 1"));
        }
        let ones = bits.iter().filter(|&&b| b == 1).count();
        if ones != capacity {
            return Err(Error::invalid(format!(
                "action caches {ones} files, capacity is {capacity}"
            )));
        }
        Ok(ActionVector { bits, capacity })
    }

    /// Action caching exactly the listed files.
    pub fn from_indices(files: usize, cached: &[usize]) -> Result<Self> {
        let mut bits = vec![0u8; files];
        for &f in cached {
            if f >= files {
                return Err(Error::invalid(format!("file {f} out of range ({files} files)")));
            }
            if bits[f] == 1 {
                return Err(Error::invalid(format!("file {f} listed twice")));
            }
            bits[f] = 1;
        }
        Ok(ActionVector {
            bits,
            capacity: cached.len(),
        })
    }

    /// Caches the first `capacity` files.
    pub fn first(files: usize, capacity: usize) -> Result<Self> {
        if capacity > files {
            return Err(Error::invalid(format!("capacity {capacity} exceeds {files} files")));
        }
        let cached: Vec<usize> = (0..capacity).collect();
        Self::from_indices(files, &cached)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_cached(&self, file: usize) -> bool {
        self.bits[file] == 1
    }

    pub fn cached(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i)
    }

    pub fn uncached(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b == 0).map(|(i, _)| i)
    }

    /// `1 - a` as reals.
    pub fn miss_mask(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(1 - b)).collect()
    }

    /// Number of files cached here but not in `previous`.
    pub fn newly_fetched(&self, previous: &ActionVector) -> Result<usize> {
        check_len(self.len(), previous.len())?;
        Ok(self
            .bits
            .iter()
            .zip(&previous.bits)
            .filter(|(&n, &o)| n == 1 && o == 0)
            .count())
    }
}

impl TryFrom<Vec<u8>> for ActionVector {
    type Error = Error;

    fn try_from(bits: Vec<u8>) -> Result<Self> {
        let capacity = bits.iter().filter(|&&b| b == 1).count();
        ActionVector::new(bits, capacity)
    }
}

impl From<ActionVector> for Vec<u8> {
    fn from(a: ActionVector) -> Self {
        a.bits
    }
}

impl fmt::Debug for ActionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ActionVector{:?}", self.bits)
    }
}

pub(crate) fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Descending score order with lowest index first among ties.
fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    idx
}

/// Caches the `m` highest-scoring files; ties go to the lowest index.
pub fn top_m_action(scores: &[f64], m: usize) -> Result<ActionVector> {
    if m > scores.len() {
        return Err(Error::invalid(format!(
            "capacity {m} exceeds {} files",
            scores.len()
        )));
    }
    let mut bits = vec![0u8; scores.len()];
    for &f in rank_desc(scores).iter().take(m) {
        bits[f] = 1;
    }
    Ok(ActionVector { bits, capacity: m })
}

/// Uniformly random `m`-subset of `files`.
pub fn random_action<R: Rng + ?Sized>(files: usize, m: usize, rng: &mut R) -> Result<ActionVector> {
    if m > files {
        return Err(Error::invalid(format!("capacity {m} exceeds {files} files")));
    }
    let picked = rand::seq::index::sample(rng, files, m).into_vec();
    ActionVector::from_indices(files, &picked)
}

/// All `C(F, M)` actions in lexicographic order of their cached index sets.
#[derive(Debug, Clone)]
pub struct ActionSet {
    files: usize,
    capacity: usize,
    actions: Vec<ActionVector>,
    index: HashMap<u64, usize>,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn files(&self) -> usize {
        self.files
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &ActionVector {
        &self.actions[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ActionVector> {
        self.actions.iter()
    }

    pub fn index_of(&self, action: &ActionVector) -> Option<usize> {
        if action.len() != self.files {
            return None;
        }
        self.index.get(&mask(action)).copied()
    }
}

fn mask(a: &ActionVector) -> u64 {
    a.cached().fold(0u64, |m, f| m | (1 << f))
}

/// Enumerates every feasible action; refuses catalogues above
/// [`MAX_ENUMERATED_FILES`].
pub fn enumerate_actions(files: usize, m: usize) -> Result<ActionSet> {
    if files > MAX_ENUMERATED_FILES {
        return Err(Error::Capacity(format!(
            "refusing to enumerate actions for {files} files (limit {MAX_ENUMERATED_FILES})"
        )));
    }
    if m > files {
        return Err(Error::invalid(format!("capacity {m} exceeds {files} files")));
    }
    let mut actions = Vec::new();
    let mut combo: Vec<usize> = (0..m).collect();
    loop {
        actions.push(ActionVector::from_indices(files, &combo)?);
        // advance to the next combination in lexicographic order
        let mut i = m;
        while i > 0 && combo[i - 1] == files - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..m {
            combo[j] = combo[j - 1] + 1;
        }
    }
    let index = actions.iter().enumerate().map(|(i, a)| (mask(a), i)).collect();
    Ok(ActionSet {
        files,
        capacity: m,
        actions,
        index,
    })
}

/// Classical replacement policies used as baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvictionPolicy {
    Lru,
    Lfu,
    Fifo,
}

impl EvictionPolicy {
    pub const ALL: [EvictionPolicy; 3] = [EvictionPolicy::Lru, EvictionPolicy::Lfu, EvictionPolicy::Fifo];

    pub fn name(self) -> &'static str {
        match self {
            EvictionPolicy::Lru => "lru",
            EvictionPolicy::Lfu => "lfu",
            EvictionPolicy::Fifo => "fifo",
        }
    }
}

/// Event-driven cache refreshed on every request.
///
/// LFU keeps counts for every file ever requested, not only residents.
#[derive(Debug, Clone)]
pub struct EvictionCache {
    policy: EvictionPolicy,
    capacity: usize,
    resident: Vec<bool>,
    len: usize,
    clock: u64,
    last_use: Vec<u64>,
    inserted: Vec<u64>,
    counts: Vec<u64>,
}

impl EvictionCache {
    pub fn new(policy: EvictionPolicy, files: usize, capacity: usize) -> Self {
        EvictionCache {
            policy,
            capacity,
            resident: vec![false; files],
            len: 0,
            clock: 0,
            last_use: vec![0; files],
            inserted: vec![0; files],
            counts: vec![0; files],
        }
    }

    pub fn policy(&self) -> EvictionPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, file: usize) -> bool {
        self.resident.get(file).copied().unwrap_or(false)
    }

    pub fn resident(&self) -> Vec<usize> {
        (0..self.resident.len()).filter(|&f| self.resident[f]).collect()
    }

    fn victim(&self) -> Option<usize> {
        let key = |f: usize| match self.policy {
            EvictionPolicy::Lru => (self.last_use[f], 0),
            EvictionPolicy::Lfu => (self.counts[f], 0),
            EvictionPolicy::Fifo => (self.inserted[f], 0),
        };
        // min key, lowest index among ties
        (0..self.resident.len())
            .filter(|&f| self.resident[f])
            .min_by_key(|&f| (key(f), f))
    }

    /// Serves one request; returns whether it hit.
    pub fn serve(&mut self, file: usize) -> Result<bool> {
        if file >= self.resident.len() {
            return Err(Error::invalid(format!("file {file} out of range")));
        }
        self.clock += 1;
        self.counts[file] += 1;
        let hit = self.resident[file];
        if !hit && self.capacity > 0 {
            if self.len == self.capacity {
                if let Some(v) = self.victim() {
                    self.resident[v] = false;
                    self.len -= 1;
                }
            }
            self.resident[file] = true;
            self.inserted[file] = self.clock;
            self.len += 1;
        }
        self.last_use[file] = self.clock;
        Ok(hit)
    }
}

/// Functional form of [`EvictionCache::serve`].
pub fn baseline_serve(mut state: EvictionCache, file: usize) -> Result<(bool, EvictionCache)> {
    let hit = state.serve(file)?;
    Ok((hit, state))
}

/// Caches the files most requested over a (future) window.
pub fn noncausal_best(window: &[RequestVector], m: usize) -> Result<ActionVector> {
    let first = window
        .first()
        .ok_or_else(|| Error::invalid("non-causal window is empty"))?;
    let mut totals = vec![0.0; first.len()];
    for r in window {
        check_len(r.len(), totals.len())?;
        for (t, &c) in totals.iter_mut().zip(&r.0) {
            *t += c as f64;
        }
    }
    top_m_action(&totals, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn bits(a: &ActionVector) -> Vec<u8> {
        a.bits().to_vec()
    }

    #[test]
    fn top_m_examples() {
        assert_eq!(bits(&top_m_action(&[3.0, 1.0, 2.0], 2).unwrap()), vec![1, 0, 1]);
        assert_eq!(bits(&top_m_action(&[0.5; 4], 2).unwrap()), vec![1, 1, 0, 0]);
        assert_eq!(bits(&top_m_action(&[1.0, 7.0, -2.0], 3).unwrap()), vec![1, 1, 1]);
        assert!(top_m_action(&[1.0], 2).is_err());
    }

    #[test]
    fn enumerate_examples() {
        let s = enumerate_actions(2, 1).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(bits(s.get(0)), vec![1, 0]);
        assert_eq!(bits(s.get(1)), vec![0, 1]);
        assert_eq!(enumerate_actions(10, 2).unwrap().len(), 45);
        let s = enumerate_actions(4, 2).unwrap();
        assert_eq!(s.len(), 6);
        let unique: std::collections::HashSet<_> = s.iter().cloned().collect();
        assert_eq!(unique.len(), 6);
        for (i, a) in s.iter().enumerate() {
            assert_eq!(s.index_of(a), Some(i));
        }
        assert!(matches!(enumerate_actions(21, 2), Err(Error::Capacity(_))));
        assert_eq!(enumerate_actions(5, 0).unwrap().len(), 1);
        assert_eq!(enumerate_actions(5, 5).unwrap().len(), 1);
    }

    #[test]
    fn action_validation() {
        assert!(ActionVector::new(vec![1, 0, 1], 2).is_ok());
        assert!(ActionVector::new(vec![1, 0, 1], 1).is_err());
        assert!(ActionVector::new(vec![2, 0], 1).is_err());
        assert!(ActionVector::from_indices(3, &[0, 0]).is_err());
        let a = ActionVector::from_indices(4, &[0, 1]).unwrap();
        let b = ActionVector::from_indices(4, &[1, 3]).unwrap();
        assert_eq!(b.newly_fetched(&a).unwrap(), 1);
    }

    #[test]
    fn random_action_is_uniform() {
        let set = enumerate_actions(4, 2).unwrap();
        let mut counts = vec![0usize; set.len()];
        let mut rng = stream(1, Stream::Agent);
        let n = 60_000;
        for _ in 0..n {
            let a = random_action(4, 2, &mut rng).unwrap();
            counts[set.index_of(&a).unwrap()] += 1;
        }
        let expected = n as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 5 degrees of freedom, 1% critical value
        assert!(chi2 < 15.086, "chi2 {chi2}");
    }

    fn run(policy: EvictionPolicy, m: usize, seq: &[usize]) -> EvictionCache {
        let mut c = EvictionCache::new(policy, 4, m);
        for &f in seq {
            c.serve(f).unwrap();
        }
        c
    }

    #[test]
    fn baseline_examples() {
        let (hit, c) = baseline_serve(EvictionCache::new(EvictionPolicy::Lru, 2, 1), 0).unwrap();
        assert!(!hit);
        assert_eq!(c.resident(), vec![0]);
        // f1,f2,f1,f3 with files 0,1,0,2
        assert_eq!(run(EvictionPolicy::Lru, 2, &[0, 1, 0, 2]).resident(), vec![0, 2]);
        assert_eq!(run(EvictionPolicy::Fifo, 2, &[0, 1, 0, 2]).resident(), vec![1, 2]);
        assert_eq!(run(EvictionPolicy::Lfu, 2, &[0, 1, 0, 2]).resident(), vec![0, 2]);
    }

    #[test]
    fn lfu_counts_survive_eviction() {
        // file 1 is requested twice, evicted, then competes with its old count
        let c = run(EvictionPolicy::Lfu, 1, &[1, 1, 0, 2]);
        assert_eq!(c.resident(), vec![2]);
        let mut c = run(EvictionPolicy::Lfu, 2, &[1, 1, 0, 2]);
        // resident {1, 2}; request 0 (count 2) evicts 2 (count 1)
        assert!(!c.serve(0).unwrap());
        assert_eq!(c.resident(), vec![0, 1]);
    }

    #[test]
    fn noncausal_examples() {
        let w = vec![RequestVector(vec![5, 1]), RequestVector(vec![0, 2])];
        assert_eq!(bits(&noncausal_best(&w, 1).unwrap()), vec![1, 0]);
        assert_eq!(bits(&noncausal_best(&[RequestVector(vec![0, 0])], 1).unwrap()), vec![1, 0]);
        let w = vec![RequestVector(vec![9, 7, 3, 1])];
        assert_eq!(bits(&noncausal_best(&w, 2).unwrap()), vec![1, 1, 0, 0]);
        assert!(noncausal_best(&[], 1).is_err());
    }

    proptest! {
        #[test]
        fn top_m_maximizes_score(scores in proptest::collection::vec(-10i32..10, 1..=8), m_seed in 0usize..8) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let m = m_seed % (scores.len() + 1);
            let best = top_m_action(&scores, m).unwrap();
            let value = |a: &ActionVector| a.cached().map(|f| scores[f]).sum::<f64>();
            let set = enumerate_actions(scores.len(), m).unwrap();
            let max = set.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(value(&best), max);
        }

        #[test]
        fn baselines_respect_capacity(seq in proptest::collection::vec(0usize..6, 0..200), m in 0usize..4) {
            for p in EvictionPolicy::ALL {
                let mut c = EvictionCache::new(p, 6, m);
                for &f in &seq {
                    c.serve(f).unwrap();
                    prop_assert!(c.len() <= m);
                    prop_assert_eq!(c.len(), c.resident().len());
                }
            }
        }

        #[test]
        fn baselines_agree_without_eviction(seq in proptest::collection::vec(0usize..5, 0..100)) {
            let hits = |p| {
                let mut c = EvictionCache::new(p, 5, 5);
                seq.iter().map(|&f| c.serve(f).unwrap()).collect::<Vec<_>>()
            };
            let lru = hits(EvictionPolicy::Lru);
            prop_assert_eq!(&lru, &hits(EvictionPolicy::Lfu));
            prop_assert_eq!(&lru, &hits(EvictionPolicy::Fifo));
        }
    }
}
