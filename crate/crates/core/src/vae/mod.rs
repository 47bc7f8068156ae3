//! Diagonal-Gaussian variational autoencoder.
//!
//! The encoder maps a feature vector to the mean and log-variance of
//! `q(z|x)`; the decoder maps a latent sample to the mean of a diagonal
//! Gaussian `p(x|z)` whose per-dimension log-variance is a learned vector.
//! The prior is standard normal. Hidden layers use tanh, heads are linear.

mod checkpoint;
mod grad;
mod train;

pub use checkpoint::{checkpoint_bytes, parse_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use grad::{grad_elbo, grad_elbo_with_noise};
pub use train::{train, TrainConfig, TrainOutcome};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::nn::{mlp_forward, Dense};
use crate::rng::rng_for;

/// Bound applied to every log-variance, encoder and decoder alike.
pub const LOGVAR_CLAMP: f64 = 8.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VaeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for VaeError {
    fn from(e: std::io::Error) -> Self {
        VaeError::Io(e.to_string())
    }
}

/// Encoder (`φ`) and decoder (`θ`) parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams {
    pub encoder_layers: Vec<Dense>,
    pub decoder_layers: Vec<Dense>,
    pub decoder_logvar: Vec<f64>,
    pub latent_dim: usize,
    pub input_dim: usize,
}

/// Parameters of `q(z|x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStats {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboValue {
    pub recon_logprob: f64,
    pub kl: f64,
    pub elbo: f64,
    pub mc_samples: usize,
}

/// Standard-normal draws for the reparameterized latent samples,
/// `mc_samples × latent_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboNoise {
    pub eps: Vec<Vec<f64>>,
}

impl ElboNoise {
    pub fn draw(mc_samples: usize, latent_dim: usize, noise_seed: u64) -> Self {
        let mut rng = rng_for(noise_seed, 0x5EED_E1B0);
        let eps = (0..mc_samples)
            .map(|_| (0..latent_dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        ElboNoise { eps }
    }

    pub fn mc_samples(&self) -> usize {
        self.eps.len()
    }
}

pub(crate) fn clamp_logvar(v: f64) -> f64 {
    v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
}

impl VaeParams {
    /// Random initialization. Decoder hidden sizes mirror `hidden_dims` in reverse.
    pub fn init(input_dim: usize, latent_dim: usize, hidden_dims: &[usize], seed: u64) -> Result<Self, VaeError> {
        if input_dim == 0 || latent_dim == 0 {
            return Err(VaeError::InvalidDimensions(format!(
                "input_dim={input_dim}, latent_dim={latent_dim}"
            )));
        }
        if hidden_dims.is_empty() || hidden_dims.contains(&0) {
            return Err(VaeError::InvalidDimensions(format!("hidden_dims={hidden_dims:?}")));
        }
        let mut rng = rng_for(seed, 0x1417);
        let mut enc_sizes = vec![input_dim];
        enc_sizes.extend_from_slice(hidden_dims);
        enc_sizes.push(2 * latent_dim);
        let mut dec_sizes = vec![latent_dim];
        dec_sizes.extend(hidden_dims.iter().rev());
        dec_sizes.push(input_dim);

        let encoder_layers = enc_sizes
            .windows(2)
            .map(|w| Dense::random(w[0], w[1], &mut rng))
            .collect();
        let decoder_layers = dec_sizes
            .windows(2)
            .map(|w| Dense::random(w[0], w[1], &mut rng))
            .collect();
        Ok(VaeParams {
            encoder_layers,
            decoder_layers,
            decoder_logvar: vec![0.0; input_dim],
            latent_dim,
            input_dim,
        })
    }

    /// Checks the layer chain, clamp ranges and finiteness.
    pub fn validate(&self) -> Result<(), VaeError> {
        let bad = |m: String| Err(VaeError::InvalidDimensions(m));
        if self.input_dim == 0 || self.latent_dim == 0 {
            return bad("zero input or latent dimension".into());
        }
        if self.encoder_layers.is_empty() || self.decoder_layers.is_empty() {
            return bad("missing layers".into());
        }
        let chain_ok = |layers: &[Dense], first: usize, last: usize| {
            layers[0].in_dim == first
                && layers.last().map(|l| l.out_dim) == Some(last)
                && layers.windows(2).all(|w| w[0].out_dim == w[1].in_dim)
                && layers
                    .iter()
                    .all(|l| l.weight.len() == l.in_dim * l.out_dim && l.bias.len() == l.out_dim)
        };
        if !chain_ok(&self.encoder_layers, self.input_dim, 2 * self.latent_dim) {
            return bad("encoder layers do not chain input_dim -> 2*latent_dim".into());
        }
        if !chain_ok(&self.decoder_layers, self.latent_dim, self.input_dim) {
            return bad("decoder layers do not chain latent_dim -> input_dim".into());
        }
        if self.decoder_logvar.len() != self.input_dim {
            return bad("decoder_logvar length".into());
        }
        if !self.is_finite() {
            return Err(VaeError::NonFinite("parameters".into()));
        }
        if self.decoder_logvar.iter().any(|v| v.abs() > LOGVAR_CLAMP) {
            return bad("decoder_logvar outside clamp range".into());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.encoder_layers.iter().chain(&self.decoder_layers).all(Dense::is_finite)
            && self.decoder_logvar.iter().all(|v| v.is_finite())
    }

    /// Same shapes, every value zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        VaeParams {
            encoder_layers: self.encoder_layers.iter().map(Dense::zeros_like).collect(),
            decoder_layers: self.decoder_layers.iter().map(Dense::zeros_like).collect(),
            decoder_logvar: vec![0.0; self.input_dim],
            latent_dim: self.latent_dim,
            input_dim: self.input_dim,
        }
    }

    pub fn encoder_param_count(&self) -> usize {
        self.encoder_layers.iter().map(Dense::param_count).sum()
    }

    pub fn param_count(&self) -> usize {
        self.encoder_param_count()
            + self.decoder_layers.iter().map(Dense::param_count).sum::<usize>()
            + self.decoder_logvar.len()
    }

    /// Encoder parameters flattened layer by layer (weights, then bias).
    pub fn encoder_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoder_param_count());
        for l in &self.encoder_layers {
            l.push_flat(&mut out);
        }
        out
    }

    pub fn set_encoder_flat(&mut self, flat: &[f64]) -> Result<(), VaeError> {
        let expected = self.encoder_param_count();
        if flat.len() != expected {
            return Err(VaeError::DimensionMismatch { expected, got: flat.len() });
        }
        let mut rest = flat;
        for l in &mut self.encoder_layers {
            rest = l.read_flat(rest);
        }
        Ok(())
    }

    /// Every parameter in checkpoint declaration order: encoder layers,
    /// decoder layers, decoder log-variance.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.encoder_flat();
        for l in &self.decoder_layers {
            l.push_flat(&mut out);
        }
        out.extend_from_slice(&self.decoder_logvar);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), VaeError> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(VaeError::DimensionMismatch { expected, got: flat.len() });
        }
        let mut rest = flat;
        for l in self.encoder_layers.iter_mut().chain(self.decoder_layers.iter_mut()) {
            rest = l.read_flat(rest);
        }
        self.decoder_logvar.copy_from_slice(rest);
        Ok(())
    }

    /// `self += scale * grad`, then re-clamps the decoder log-variance.
    pub fn add_scaled(&mut self, grad: &VaeParams, scale: f64) {
        for (a, b) in self.encoder_layers.iter_mut().zip(&grad.encoder_layers) {
            a.add_scaled(b, scale);
        }
        for (a, b) in self.decoder_layers.iter_mut().zip(&grad.decoder_layers) {
            a.add_scaled(b, scale);
        }
        for (a, b) in self.decoder_logvar.iter_mut().zip(&grad.decoder_logvar) {
            *a = clamp_logvar(*a + scale * b);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), VaeError> {
        if x.len() != self.input_dim {
            return Err(VaeError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }
}

/// Posterior statistics `q(z|x)`.
pub fn encode(params: &VaeParams, x: &[f64]) -> Result<LatentStats, VaeError> {
    params.check_input(x)?;
    let trace = mlp_forward(&params.encoder_layers, x);
    Ok(split_heads(trace.output(), params.latent_dim))
}

pub(crate) fn split_heads(out: &[f64], latent_dim: usize) -> LatentStats {
    LatentStats {
        mu: out[..latent_dim].to_vec(),
        logvar: out[latent_dim..2 * latent_dim].iter().map(|&v| clamp_logvar(v)).collect(),
    }
}

/// Mean and log-variance of `p(x|z)`.
pub fn decode(params: &VaeParams, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
    if z.len() != params.latent_dim {
        return Err(VaeError::DimensionMismatch { expected: params.latent_dim, got: z.len() });
    }
    let trace = mlp_forward(&params.decoder_layers, z);
    Ok((trace.output().to_vec(), params.decoder_logvar.clone()))
}

/// `KL(q || N(0, I))` in closed form.
pub fn kl_diag_gaussian(stats: &LatentStats) -> f64 {
    0.5 * stats
        .mu
        .iter()
        .zip(&stats.logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Log-density of `x` under a diagonal Gaussian.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * x
        .iter()
        .zip(mean)
        .zip(logvar)
        .map(|((xi, m), lv)| {
            let r = xi - m;
            LN_2PI + lv + r * r * (-lv).exp()
        })
        .sum::<f64>()
}

/// Monte-Carlo ELBO with freshly drawn noise from `noise_seed`.
pub fn elbo(params: &VaeParams, x: &[f64], mc_samples: usize, noise_seed: u64) -> Result<ElboValue, VaeError> {
    if mc_samples == 0 {
        return Err(VaeError::InvalidDimensions("mc_samples must be >= 1".into()));
    }
    let noise = ElboNoise::draw(mc_samples, params.latent_dim, noise_seed);
    elbo_with_noise(params, x, &noise)
}

/// ELBO using pre-drawn reparameterization noise.
pub fn elbo_with_noise(params: &VaeParams, x: &[f64], noise: &ElboNoise) -> Result<ElboValue, VaeError> {
    params.check_input(x)?;
    if noise.mc_samples() == 0 {
        return Err(VaeError::InvalidDimensions("mc_samples must be >= 1".into()));
    }
    let stats = encode(params, x)?;
    let std: Vec<f64> = stats.logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
    let mut z = vec![0.0; params.latent_dim];
    let mut total = 0.0;
    for eps in &noise.eps {
        if eps.len() != params.latent_dim {
            return Err(VaeError::DimensionMismatch { expected: params.latent_dim, got: eps.len() });
        }
        for j in 0..params.latent_dim {
            z[j] = stats.mu[j] + std[j] * eps[j];
        }
        let recon = mlp_forward(&params.decoder_layers, &z);
        total += gaussian_logpdf(x, recon.output(), &params.decoder_logvar);
    }
    let recon_logprob = total / noise.mc_samples() as f64;
    let kl = kl_diag_gaussian(&stats);
    Ok(ElboValue {
        recon_logprob,
        kl,
        elbo: recon_logprob - kl,
        mc_samples: noise.mc_samples(),
    })
}
