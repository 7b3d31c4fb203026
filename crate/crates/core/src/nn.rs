//! Small fully connected network with rectifier hidden layers and manual
//! backpropagation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cache::check_len;
use crate::error::{Error, Result};

/// Output nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    #[default]
    Linear,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardNet {
    sizes: Vec<usize>,
    head: Head,
    /// `weights[l]` maps layer `l` to `l + 1`; `sizes[l+1] x sizes[l]`, row-major
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Gradients with the same shapes as a [`FeedforwardNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &FeedforwardNet) -> Self {
        GradientSet {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    /// Weight blocks then bias blocks, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0)
    }
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// `sum_f mask_f (target_f - output_f)^2`.
pub fn masked_l2_loss(output: &[f64], target: &[f64], mask: &[f64]) -> Result<f64> {
    check_len(output.len(), target.len())?;
    check_len(output.len(), mask.len())?;
    Ok(output
        .iter()
        .zip(target)
        .zip(mask)
        .map(|((&o, &t), &m)| m * (t - o) * (t - o))
        .sum())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    layers: Vec<usize>,
    head: Head,
    encoding: String,
}

const ENCODING: &str = "f64-le";

impl FeedforwardNet {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(FeedforwardNet {
            sizes: sizes.to_vec(),
            head,
            weights: sizes.windows(2).map(|p| vec![0.0; p[0] * p[1]]).collect(),
            biases: sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// Parameters uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        let mut net = FeedforwardNet::zeros(sizes, head)?;
        for (l, (w, b)) in net.weights.iter_mut().zip(net.biases.iter_mut()).enumerate() {
            let bound = 1.0 / (sizes[l] as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
            b.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    /// Same ordering as [`GradientSet::flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        check_len(values.len(), self.num_parameters())?;
        let mut it = values.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).for_each(|x| *x = it.next().unwrap_or(0.0));
        }
        Ok(())
    }

    /// Pre-activations and activations of every layer; `acts[0]` is the input.
    fn trace(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        check_len(x.len(), self.input_dim())?;
        let layers = self.weights.len();
        let mut zs = Vec::with_capacity(layers);
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = &acts[l];
            let w = &self.weights[l];
            let z: Vec<f64> = (0..n_out)
                .map(|i| {
                    let row = &w[i * n_in..(i + 1) * n_in];
                    self.biases[l][i] + row.iter().zip(a).map(|(p, q)| p * q).sum::<f64>()
                })
                .collect();
            let out = if l + 1 < layers {
                z.iter().map(|&v| relu(v)).collect()
            } else {
                match self.head {
                    Head::Linear => z.clone(),
                    Head::Softmax => softmax(&z),
                }
            };
            zs.push(z);
            acts.push(out);
        }
        Ok((zs, acts))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (_, mut acts) = self.trace(x)?;
        Ok(acts.pop().unwrap_or_default())
    }

    /// Loss and exact gradients of [`masked_l2_loss`] at input `x`.
    pub fn backward(&self, x: &[f64], target: &[f64], mask: &[f64]) -> Result<(f64, GradientSet)> {
        let (zs, acts) = self.trace(x)?;
        let out = acts.last().cloned().unwrap_or_default();
        let loss = masked_l2_loss(&out, target, mask)?;
        let g_out: Vec<f64> = out
            .iter()
            .zip(target)
            .zip(mask)
            .map(|((&o, &t), &m)| -2.0 * m * (t - o))
            .collect();
        let mut delta = match self.head {
            Head::Linear => g_out,
            Head::Softmax => {
                let dot: f64 = g_out.iter().zip(&out).map(|(g, o)| g * o).sum();
                out.iter().zip(&g_out).map(|(&o, &g)| o * (g - dot)).collect()
            }
        };
        let mut grads = GradientSet::zeros_like(self);
        for l in (0..self.weights.len()).rev() {
            let n_in = self.sizes[l];
            let a = &acts[l];
            let gw = &mut grads.weights[l];
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (g, &ai) in gw[i * n_in..(i + 1) * n_in].iter_mut().zip(a) {
                        *g = d * ai;
                    }
                }
            }
            grads.biases[l].copy_from_slice(&delta);
            if l > 0 {
                let w = &self.weights[l];
                let mut prev = vec![0.0; n_in];
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (p, &wij) in prev.iter_mut().zip(&w[i * n_in..(i + 1) * n_in]) {
                            *p += wij * d;
                        }
                    }
                }
                for (p, &z) in prev.iter_mut().zip(&zs[l - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, grads))
    }

    fn same_shape(&self, grads: &GradientSet) -> bool {
        grads.weights.len() == self.weights.len()
            && grads.weights.iter().zip(&self.weights).all(|(a, b)| a.len() == b.len())
            && grads.biases.iter().zip(&self.biases).all(|(a, b)| a.len() == b.len())
    }

    /// `theta <- theta - lr * grad`.
    pub fn sgd_step(&mut self, grads: &GradientSet, lr: f64) -> Result<()> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!("learning rate {lr} must be positive")));
        }
        if !self.same_shape(grads) {
            return Err(Error::invalid("gradient shapes differ from the network"));
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.iter_mut().zip(g).for_each(|(x, d)| *x -= lr * d);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.iter_mut().zip(g).for_each(|(x, d)| *x -= lr * d);
        }
        if self.weights.iter().flatten().chain(self.biases.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("network parameters diverged".into()));
        }
        Ok(())
    }

    /// Copies every parameter into `target`, which must share the architecture.
    pub fn clone_into(&self, target: &mut FeedforwardNet) -> Result<()> {
        if target.sizes != self.sizes || target.head != self.head {
            return Err(Error::invalid("architecture mismatch"));
        }
        for (t, s) in target.weights.iter_mut().zip(&self.weights) {
            t.copy_from_slice(s);
        }
        for (t, s) in target.biases.iter_mut().zip(&self.biases) {
            t.copy_from_slice(s);
        }
        Ok(())
    }

    /// JSON header and little-endian parameter bytes (layer order, weights
    /// row-major then biases).
    pub fn to_bytes(&self) -> Result<(String, Vec<u8>)> {
        let header = Header {
            layers: self.sizes.clone(),
            head: self.head,
            encoding: ENCODING.into(),
        };
        let bytes = self.flat().iter().flat_map(|v| v.to_le_bytes()).collect();
        Ok((serde_json::to_string_pretty(&header)?, bytes))
    }

    pub fn from_bytes(header: &str, bytes: &[u8]) -> Result<Self> {
        let header: Header = serde_json::from_str(header)?;
        if header.encoding != ENCODING {
            return Err(Error::invalid(format!("unsupported encoding {}", header.encoding)));
        }
        let mut net = FeedforwardNet::zeros(&header.layers, header.head)?;
        if bytes.len() != 8 * net.num_parameters() {
            return Err(Error::invalid(format!(
                "expected {} parameter bytes, found {}",
                8 * net.num_parameters(),
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        net.set_flat(&values)?;
        Ok(net)
    }

    fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
        (dir.join(format!("{stem}.json")), dir.join(format!("{stem}.bin")))
    }

    /// Writes `<stem>.json` and `<stem>.bin` under `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let (h, b) = Self::paths(dir, stem);
        let (header, bytes) = self.to_bytes()?;
        fs::write(&h, header).map_err(|e| Error::io(&h, e))?;
        fs::write(&b, bytes).map_err(|e| Error::io(&b, e))?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let (h, b) = Self::paths(dir, stem);
        let header = fs::read_to_string(&h).map_err(|e| Error::io(&h, e))?;
        let bytes = fs::read(&b).map_err(|e| Error::io(&b, e))?;
        FeedforwardNet::from_bytes(&header, &bytes)
    }
}
