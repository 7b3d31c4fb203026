//! Zipf popularity profiles, Markov popularity chains and per-slot request
//! realizations.

use std::ops::Index;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Probability vector over the file catalogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates nonnegativity and unit mass.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("probability vector is empty"));
        }
        if entries.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probability entries must be finite and nonnegative"));
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ProbVector(entries))
    }

    pub fn uniform(files: usize) -> Result<Self> {
        if files == 0 {
            return Err(Error::invalid("file count must be positive"));
        }
        Ok(ProbVector(vec![1.0 / files as f64; files]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Total-variation distance to another profile of the same length.
    pub fn total_variation(&self, other: &ProbVector) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-file request counts observed in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestVector(pub Vec<u64>);

impl RequestVector {
    pub fn zeros(files: usize) -> Self {
        RequestVector(vec![0; files])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

/// Finite-state Markov chain over popularity profiles.
///
/// Serialized as `{"states": [[...]], "transition": [[...]]}` with row-major
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainDoc", into = "ChainDoc")]
pub struct PopularityChain {
    states: Vec<ProbVector>,
    transition: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDoc {
    states: Vec<ProbVector>,
    transition: Vec<Vec<f64>>,
}

impl TryFrom<ChainDoc> for PopularityChain {
    type Error = Error;

    fn try_from(doc: ChainDoc) -> Result<Self> {
        PopularityChain::new(doc.states, doc.transition)
    }
}

impl From<PopularityChain> for ChainDoc {
    fn from(c: PopularityChain) -> Self {
        ChainDoc {
            states: c.states,
            transition: c.transition,
        }
    }
}

impl PopularityChain {
    pub fn new(states: Vec<ProbVector>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::invalid("chain needs at least one state"));
        }
        let files = states[0].len();
        if states.iter().any(|s| s.len() != files) {
            return Err(Error::invalid("chain states have different lengths"));
        }
        if transition.len() != n || transition.iter().any(|r| r.len() != n) {
            return Err(Error::invalid(format!("transition matrix must be {n}x{n}")));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::invalid(format!("transition row {i} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SUM_TOL {
                return Err(Error::invalid(format!("transition row {i} sums to {total}")));
            }
        }
        Ok(PopularityChain { states, transition })
    }

    /// A single profile that never changes.
    pub fn constant(profile: ProbVector) -> Self {
        PopularityChain {
            states: vec![profile],
            transition: vec![vec![1.0]],
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_files(&self) -> usize {
        self.states[0].len()
    }

    pub fn states(&self) -> &[ProbVector] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> &ProbVector {
        &self.states[idx]
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.transition[idx]
    }

    /// Index of the chain state closest in total variation (lowest index on ties).
    pub fn nearest_state(&self, profile: &ProbVector) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.states.iter().enumerate() {
            let d = s.total_variation(profile);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Stationary distribution by power iteration on the averaged chain
    /// `(I + T) / 2`, which shares the stationary law and is aperiodic.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.num_states();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for (i, row) in self.transition.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    next[j] += 0.5 * pi[i] * p;
                }
                next[i] += 0.5 * pi[i];
            }
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Zipf profile: the file at rank `r` (1-based) in `ordering` receives mass
/// proportional to `r^-eta`.
pub fn zipf_profile(files: usize, eta: f64, ordering: &[usize]) -> Result<ProbVector> {
    if files == 0 {
        return Err(Error::invalid("file count must be positive"));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::invalid(format!("Zipf exponent must be >= 0, got {eta}")));
    }
    if ordering.len() != files {
        return Err(Error::invalid("ordering length differs from file count"));
    }
    let mut seen = vec![false; files];
    for &f in ordering {
        if f >= files || seen[f] {
            return Err(Error::invalid("ordering is not a permutation"));
        }
        seen[f] = true;
    }
    let weights: Vec<f64> = (1..=files).map(|r| (r as f64).powf(-eta)).collect();
    let norm: f64 = weights.iter().sum();
    let mut entries = vec![0.0; files];
    for (rank, &f) in ordering.iter().enumerate() {
        entries[f] = weights[rank] / norm;
    }
    ProbVector::new(entries)
}

/// Uniformly random permutation of `0..files`.
pub fn random_ordering<R: Rng + ?Sized>(files: usize, rng: &mut R) -> Vec<usize> {
    let mut ordering: Vec<usize> = (0..files).collect();
    ordering.shuffle(rng);
    ordering
}

/// Row-stochastic matrix with i.i.d. uniform(0,1) entries normalized per row.
pub fn random_transition<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// Random chain: each state is a Zipf profile with exponent drawn uniformly
/// from `eta_range` and an independent random ordering.
pub fn random_chain<R: Rng + ?Sized>(
    num_states: usize,
    files: usize,
    eta_range: (f64, f64),
    rng: &mut R,
) -> Result<PopularityChain> {
    let (lo, hi) = eta_range;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
        return Err(Error::invalid(format!("empty or negative eta interval ({lo}, {hi})")));
    }
    if num_states == 0 {
        return Err(Error::invalid("chain needs at least one state"));
    }
    let etas: Vec<f64> = (0..num_states).map(|_| rng.gen_range(lo..hi)).collect();
    chain_from_etas(&etas, files, rng)
}

/// Chain whose states use the given Zipf exponents, random orderings and a
/// random transition matrix.
pub fn chain_from_etas<R: Rng + ?Sized>(
    etas: &[f64],
    files: usize,
    rng: &mut R,
) -> Result<PopularityChain> {
    if etas.is_empty() {
        return Err(Error::invalid("chain needs at least one state"));
    }
    let states = etas
        .iter()
        .map(|&eta| {
            let ordering = random_ordering(files, rng);
            zipf_profile(files, eta, &ordering)
        })
        .collect::<Result<Vec<_>>>()?;
    let transition = if etas.len() == 1 {
        vec![vec![1.0]]
    } else {
        random_transition(etas.len(), rng)
    };
    PopularityChain::new(states, transition)
}

/// Draws the successor index from the transition row of `state_idx`.
pub fn step_chain<R: Rng + ?Sized>(
    chain: &PopularityChain,
    state_idx: usize,
    rng: &mut R,
) -> Result<usize> {
    if state_idx >= chain.num_states() {
        return Err(Error::invalid(format!(
            "state index {state_idx} out of range ({} states)",
            chain.num_states()
        )));
    }
    Ok(sample_index(chain.row(state_idx), rng))
}

/// Inverse-CDF draw from a discrete distribution; never returns a zero-mass index.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Cumulative table for repeated categorical draws.
pub(crate) struct Sampler {
    cumulative: Vec<f64>,
}

impl Sampler {
    pub(crate) fn new(profile: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = profile
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Sampler { cumulative }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u: f64 = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        let mut idx = idx.min(self.cumulative.len() - 1);
        // step back over trailing zero-mass entries hit by rounding
        while idx > 0 && self.cumulative[idx] == self.cumulative[idx - 1] {
            idx -= 1;
        }
        idx
    }
}

/// `requests` independent categorical draws from `profile`, as counts.
pub fn sample_requests<R: Rng + ?Sized>(
    profile: &ProbVector,
    requests: u64,
    rng: &mut R,
) -> RequestVector {
    let mut counts = vec![0u64; profile.len()];
    if requests == 0 {
        return RequestVector(counts);
    }
    let sampler = Sampler::new(profile.as_slice());
    for _ in 0..requests {
        counts[sampler.draw(rng)] += 1;
    }
    RequestVector(counts)
}

/// Normalized request counts.
pub fn empirical_profile(requests: &RequestVector) -> Result<ProbVector> {
    let total = requests.total();
    if total == 0 {
        return Err(Error::NoRequests);
    }
    let t = total as f64;
    let mut entries: Vec<f64> = requests.0.iter().map(|&c| c as f64 / t).collect();
    // absorb rounding so the unit-mass invariant holds exactly enough
    let s: f64 = entries.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        entries.iter_mut().for_each(|p| *p /= s);
    }
    ProbVector::new(entries)
}
