use rand::seq::SliceRandom;

use super::grad::grad_elbo_with_noise;
use super::{ElboNoise, VaeError, VaeParams};
use crate::rng::{derive_seed, rng_for};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            mc_samples: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: VaeParams,
    /// Mean negative ELBO over each epoch's minibatch passes.
    pub loss_curve: Vec<f64>,
}

/// Minibatch SGD ascent on the ELBO.
pub fn train(params: &VaeParams, dataset: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainOutcome, VaeError> {
    if dataset.is_empty() {
        return Err(VaeError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.mc_samples == 0 || !(cfg.learning_rate > 0.0) {
        return Err(VaeError::InvalidDimensions(format!("bad training hyperparameters: {cfg:?}")));
    }
    if let Some(x) = dataset.iter().find(|x| x.len() != params.input_dim) {
        return Err(VaeError::DimensionMismatch { expected: params.input_dim, got: x.len() });
    }
    params.validate()?;

    let mut current = params.clone();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = rng_for(cfg.seed, epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = current.zeros_like();
            for &idx in batch {
                let noise_seed = derive_seed(derive_seed(cfg.seed, epoch as u64), idx as u64);
                let noise = ElboNoise::draw(cfg.mc_samples, current.latent_dim, noise_seed);
                let (value, g) = grad_elbo_with_noise(&current, &dataset[idx], &noise)?;
                epoch_loss -= value.elbo;
                acc.add_scaled(&g, 1.0);
            }
            current.add_scaled(&acc, cfg.learning_rate / batch.len() as f64);
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() || !current.is_finite() {
            return Err(VaeError::Diverged { epoch, loss: mean });
        }
        loss_curve.push(mean);
    }
    Ok(TrainOutcome { params: current, loss_curve })
}
