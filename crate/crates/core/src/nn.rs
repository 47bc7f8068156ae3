//! Dense layers and tanh MLPs with hand-written backpropagation.
//!
//! Shared by the VAE and by the point-set feature extractor. Weights are stored
//! row-major as `out_dim × in_dim`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Gaussian weights with standard deviation `1/sqrt(in_dim)`, zero bias.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zeros_like(&self) -> Self {
        Dense::zeros(self.in_dim, self.out_dim)
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.forward_into(x, &mut out);
        out
    }

    /// Accumulates parameter gradients into `grads` for upstream gradient `delta`
    /// at input `x`, and writes `Wᵀ·delta` into `grad_in` when requested.
    pub fn backward(&self, x: &[f64], delta: &[f64], grads: &mut Dense, grad_in: Option<&mut [f64]>) {
        for (o, &d) in delta.iter().enumerate() {
            grads.bias[o] += d;
            if d == 0.0 {
                continue;
            }
            let row = &mut grads.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if let Some(gi) = grad_in {
            gi.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                for (g, w) in gi.iter_mut().zip(row) {
                    *g += d * w;
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Dense, scale: f64) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += scale * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += scale * b;
        }
    }

    pub fn push_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weight);
        out.extend_from_slice(&self.bias);
    }

    /// Reads this layer's parameters from the front of `src`; returns the remainder.
    pub fn read_flat<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let (w, rest) = src.split_at(self.weight.len());
        let (b, rest) = rest.split_at(self.bias.len());
        self.weight.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        rest
    }
}

/// Activations of every layer from one forward pass; `acts[0]` is the input
/// and `acts[i + 1]` the output of layer `i`.
#[derive(Clone, Debug, Default)]
pub struct MlpTrace {
    pub acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Forward pass through a stack of layers with tanh on every layer except the last.
pub fn mlp_forward(layers: &[Dense], x: &[f64]) -> MlpTrace {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    for (i, layer) in layers.iter().enumerate() {
        let mut out = layer.forward(&acts[i]);
        if i + 1 < layers.len() {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(out);
    }
    MlpTrace { acts }
}

/// Backward pass matching [`mlp_forward`]. Accumulates into `grads` (one per layer)
/// and returns the gradient with respect to the network input.
pub fn mlp_backward(layers: &[Dense], trace: &MlpTrace, grad_out: &[f64], grads: &mut [Dense]) -> Vec<f64> {
    let mut delta = grad_out.to_vec();
    for i in (0..layers.len()).rev() {
        if i + 1 < layers.len() {
            // tanh'(a) = 1 - tanh(a)^2, using the stored post-activation
            for (d, a) in delta.iter_mut().zip(&trace.acts[i + 1]) {
                *d *= 1.0 - a * a;
            }
        }
        let mut grad_in = vec![0.0; layers[i].in_dim];
        layers[i].backward(&trace.acts[i], &delta, &mut grads[i], Some(&mut grad_in));
        delta = grad_in;
    }
    delta
}
