//! Small dense networks with hand-written backprop and an Adam optimizer.
//!
//! Parameters live in one flat vector so optimizers, target networks and
//! checkpoints can treat a model as a single slice.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::checkpoint::Tensor;
use crate::error::{Error, Result};

/// Rectified MLP: ReLU between layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    /// Input followed by each post-activation layer output.
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-initialized weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = Self::param_count(sizes);
        let mut params = vec![0.0; n];
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for p in &mut params[off..off + fan_in * fan_out] {
                *p = normal.sample(rng);
            }
            off += fan_in * fan_out + fan_out;
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let off: usize = self.sizes.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum();
        (off, self.sizes[l], self.sizes[l + 1])
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let (off, fin, fout) = self.layer(l);
            let w = &self.params[off..off + fin * fout];
            let b = &self.params[off + fin * fout..off + fin * fout + fout];
            let h = acts.last().unwrap();
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(fin)) {
                *o += dot(row, h);
            }
            if l + 1 < n_layers {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        let y = acts.last().unwrap().clone();
        (y, MlpCache { acts })
    }

    /// Accumulates parameter gradients of `dy · y` into `grad` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut delta = dy.to_vec();
        for l in (0..n_layers).rev() {
            let (off, fin, fout) = self.layer(l);
            let h = &cache.acts[l];
            let w = &self.params[off..off + fin * fout];
            for o in 0..fout {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + o * fin..off + (o + 1) * fin];
                for (gi, hi) in g.iter_mut().zip(h) {
                    *gi += d * hi;
                }
                grad[off + fin * fout + o] += d;
            }
            let mut dh = vec![0.0; fin];
            for (o, row) in w.chunks_exact(fin).enumerate() {
                let d = delta[o];
                if d != 0.0 {
                    for (dhi, wi) in dh.iter_mut().zip(row) {
                        *dhi += d * wi;
                    }
                }
            }
            if l > 0 {
                for (dhi, hi) in dh.iter_mut().zip(h) {
                    if *hi <= 0.0 {
                        *dhi = 0.0;
                    }
                }
            }
            delta = dh;
        }
        delta
    }

    /// One tensor per weight matrix and bias row.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        for l in 0..self.sizes.len() - 1 {
            let (off, fin, fout) = self.layer(l);
            out.push(Tensor::new(fout, fin, self.params[off..off + fin * fout].to_vec()));
            out.push(Tensor::new(1, fout, self.params[off + fin * fout..off + fin * fout + fout].to_vec()));
        }
        out
    }

    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        if tensors.is_empty() || tensors.len() % 2 != 0 {
            return Err(Error::Checkpoint("an MLP needs weight/bias tensor pairs".into()));
        }
        let mut sizes = vec![tensors[0].cols];
        let mut params = Vec::new();
        for pair in tensors.chunks_exact(2) {
            let (w, b) = (&pair[0], &pair[1]);
            if w.cols != *sizes.last().unwrap() || b.rows != 1 || b.cols != w.rows {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}x{} with bias {}x{} after width {}",
                    w.rows,
                    w.cols,
                    b.rows,
                    b.cols,
                    sizes.last().unwrap()
                )));
            }
            params.extend_from_slice(&w.data);
            params.extend_from_slice(&b.data);
            sizes.push(w.rows);
        }
        Ok(Self { sizes, params })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Adam over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p -= lr * wd * p`.
    pub weight_decay: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Clips `grad` to an L2 norm of at most `max_norm`.
pub fn clip_norm(grad: &mut [f64], max_norm: f64) {
    let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if n > max_norm {
        let s = max_norm / n;
        for g in grad {
            *g *= s;
        }
    }
}
