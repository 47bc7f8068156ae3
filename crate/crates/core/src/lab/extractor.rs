//! Mini point-set encoder: a shared per-point MLP, channel-wise max-pool and a
//! small head, with three feature taps.
//!
//! ```text
//! points ─▶ 3→32 tanh ─▶ 32→32 tanh ─▶ max-pool ─▶ 32→32 tanh ─▶ 32→32 tanh ─▶ readout 32→6
//!              │                           │                          │
//!          point tap                  feature tap                encoder tap
//!       (per-channel mean)
//! ```
//!
//! The extractor is fitted once on clean scenes by regressing the scene's
//! centroid and extent, then frozen. Every tap is standardized with
//! statistics of those same clean scenes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{PointCloud, MIN_POINTS};
use super::{FeatureVector, LabError, Modality, Tap};
use crate::nn::{mlp_backward, mlp_forward, Dense};
use crate::rng::rng_for;
use rand::seq::SliceRandom;

pub const FEATURE_DIM: usize = 32;
const TARGET_DIM: usize = 6;

/// Smallest standard deviation a scaler divides by.
const MIN_SCALE: f64 = 1e-3;

/// Per-dimension standardization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Scaler { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt().max(MIN_SCALE))
            .collect();
        Scaler { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Fixed input normalization: shift into the scene region, then scale.
const INPUT_SHIFT: [f64; 3] = [10.0, 0.0, 0.5];
const INPUT_SCALE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSetExtractor {
    /// `3→32`, `32→32`, both tanh.
    pub point_mlp: [Dense; 2],
    /// `32→32` tanh, `32→32` tanh, readout `32→6` linear.
    pub head: [Dense; 3],
    pub target_mean: [f64; TARGET_DIM],
    pub target_std: [f64; TARGET_DIM],
    /// Indexed by tap: point, feature, encoder.
    pub tap_scalers: [Scaler; 3],
}

/// Output of every tap for one cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct TapOutputs {
    pub point: Vec<f64>,
    pub feature: Vec<f64>,
    pub encoder: Vec<f64>,
}

impl TapOutputs {
    pub fn get(&self, tap: Tap) -> &[f64] {
        match tap {
            Tap::Point => &self.point,
            Tap::Feature => &self.feature,
            Tap::Encoder => &self.encoder,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractorTraining {
    pub scenes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ExtractorTraining {
    fn default() -> Self {
        ExtractorTraining { scenes: 384, epochs: 40, batch_size: 16, learning_rate: 0.05, seed: 0 }
    }
}

fn normalized(p: &[f64; 3]) -> [f64; 3] {
    [
        (p[0] - INPUT_SHIFT[0]) / INPUT_SCALE,
        (p[1] - INPUT_SHIFT[1]) / INPUT_SCALE,
        (p[2] - INPUT_SHIFT[2]) / INPUT_SCALE,
    ]
}

fn tanh_layer(layer: &Dense, x: &[f64]) -> Vec<f64> {
    let mut out = layer.forward(x);
    out.iter_mut().for_each(|v| *v = v.tanh());
    out
}

/// Per-channel mean computed over sorted values, so the result does not
/// depend on point order even bit-for-bit.
fn order_free_mean(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut column = Vec::with_capacity(rows.len());
    (0..dim)
        .map(|c| {
            column.clear();
            column.extend(rows.iter().map(|r| r[c]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / rows.len() as f64
        })
        .collect()
}

struct Forward {
    inputs: Vec<[f64; 3]>,
    hidden1: Vec<Vec<f64>>,
    hidden2: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    argmax: Vec<usize>,
}

impl PointSetExtractor {
    pub fn init(seed: u64) -> Self {
        let mut rng = rng_for(seed, 0xE47);
        PointSetExtractor {
            point_mlp: [Dense::random(3, FEATURE_DIM, &mut rng), Dense::random(FEATURE_DIM, FEATURE_DIM, &mut rng)],
            head: [
                Dense::random(FEATURE_DIM, FEATURE_DIM, &mut rng),
                Dense::random(FEATURE_DIM, FEATURE_DIM, &mut rng),
                Dense::random(FEATURE_DIM, TARGET_DIM, &mut rng),
            ],
            target_mean: [0.0; TARGET_DIM],
            target_std: [1.0; TARGET_DIM],
            tap_scalers: [Scaler::identity(FEATURE_DIM), Scaler::identity(FEATURE_DIM), Scaler::identity(FEATURE_DIM)],
        }
    }

    fn forward_points(&self, pc: &PointCloud) -> Result<Forward, LabError> {
        if pc.points.len() < MIN_POINTS {
            return Err(LabError::TooFewPoints { got: pc.points.len(), min: MIN_POINTS });
        }
        let inputs: Vec<[f64; 3]> = pc.points.iter().map(normalized).collect();
        let hidden1: Vec<Vec<f64>> = inputs.iter().map(|x| tanh_layer(&self.point_mlp[0], x)).collect();
        let hidden2: Vec<Vec<f64>> = hidden1.iter().map(|h| tanh_layer(&self.point_mlp[1], h)).collect();
        let mut pooled = vec![f64::NEG_INFINITY; FEATURE_DIM];
        let mut argmax = vec![0; FEATURE_DIM];
        for (i, h) in hidden2.iter().enumerate() {
            for c in 0..FEATURE_DIM {
                if h[c] > pooled[c] {
                    pooled[c] = h[c];
                    argmax[c] = i;
                }
            }
        }
        Ok(Forward { inputs, hidden1, hidden2, pooled, argmax })
    }

    /// Unscaled tap outputs.
    pub fn raw_taps(&self, pc: &PointCloud) -> Result<TapOutputs, LabError> {
        let fwd = self.forward_points(pc)?;
        let head = mlp_forward(&self.head, &fwd.pooled);
        Ok(TapOutputs {
            point: order_free_mean(&fwd.hidden1, FEATURE_DIM),
            encoder: head.acts[2].clone(),
            feature: fwd.pooled,
        })
    }

    /// Standardized tap outputs.
    pub fn taps(&self, pc: &PointCloud) -> Result<TapOutputs, LabError> {
        let raw = self.raw_taps(pc)?;
        Ok(TapOutputs {
            point: self.tap_scalers[0].apply(&raw.point),
            feature: self.tap_scalers[1].apply(&raw.feature),
            encoder: self.tap_scalers[2].apply(&raw.encoder),
        })
    }

    /// Fits the tap scalers on `scenes`.
    pub fn calibrate_scalers(&mut self, scenes: &[PointCloud]) -> Result<(), LabError> {
        let raw: Vec<TapOutputs> = scenes.par_iter().map(|s| self.raw_taps(s)).collect::<Result<_, _>>()?;
        for (k, tap) in Tap::ALL.into_iter().enumerate() {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| r.get(tap).to_vec()).collect();
            self.tap_scalers[k] = Scaler::fit(&rows);
        }
        Ok(())
    }

    pub fn extract(&self, pc: &PointCloud, tap: Tap) -> Result<FeatureVector, LabError> {
        let taps = self.taps(pc)?;
        Ok(FeatureVector::new(taps.get(tap).to_vec(), tap, Modality::Lidar))
    }

    /// Predicted `(centroid, extent)` from the extractor's own readout.
    pub fn predict(&self, pc: &PointCloud) -> Result<[f64; TARGET_DIM], LabError> {
        let fwd = self.forward_points(pc)?;
        let out = mlp_forward(&self.head, &fwd.pooled);
        let mut y = [0.0; TARGET_DIM];
        for (k, v) in out.output().iter().enumerate() {
            y[k] = v * self.target_std[k] + self.target_mean[k];
        }
        Ok(y)
    }

    /// Squared-error loss on standardized targets and its gradient.
    fn loss_grad(&self, pc: &PointCloud) -> Result<(f64, [Dense; 2], [Dense; 3]), LabError> {
        let fwd = self.forward_points(pc)?;
        let trace = mlp_forward(&self.head, &fwd.pooled);
        let targets = pc.scene.targets();
        let residual: Vec<f64> = trace
            .output()
            .iter()
            .enumerate()
            .map(|(k, y)| y - (targets[k] - self.target_mean[k]) / self.target_std[k])
            .collect();
        let loss = 0.5 * residual.iter().map(|r| r * r).sum::<f64>();

        let mut head_grads = [self.head[0].zeros_like(), self.head[1].zeros_like(), self.head[2].zeros_like()];
        let d_pooled = mlp_backward(&self.head, &trace, &residual, &mut head_grads);

        let mut point_grads = [self.point_mlp[0].zeros_like(), self.point_mlp[1].zeros_like()];
        // max-pool routes each channel's gradient to its winning point
        let mut per_point: Vec<Option<Vec<f64>>> = vec![None; fwd.inputs.len()];
        for c in 0..FEATURE_DIM {
            let i = fwd.argmax[c];
            per_point[i].get_or_insert_with(|| vec![0.0; FEATURE_DIM])[c] += d_pooled[c];
        }
        let mut d_h1 = vec![0.0; FEATURE_DIM];
        for (i, g) in per_point.iter().enumerate() {
            let Some(g) = g else { continue };
            let delta2: Vec<f64> = g.iter().zip(&fwd.hidden2[i]).map(|(d, a)| d * (1.0 - a * a)).collect();
            self.point_mlp[1].backward(&fwd.hidden1[i], &delta2, &mut point_grads[1], Some(&mut d_h1));
            let delta1: Vec<f64> = d_h1.iter().zip(&fwd.hidden1[i]).map(|(d, a)| d * (1.0 - a * a)).collect();
            self.point_mlp[0].backward(&fwd.inputs[i], &delta1, &mut point_grads[0], None);
        }
        Ok((loss, point_grads, head_grads))
    }

    /// Fits the extractor to regress scene centroid and extent from `scenes`.
    /// Returns the extractor and the per-epoch mean loss.
    pub fn fit(scenes: &[PointCloud], cfg: &ExtractorTraining) -> Result<(Self, Vec<f64>), LabError> {
        if scenes.is_empty() {
            return Err(LabError::InvalidInput("no training scenes".into()));
        }
        let mut model = PointSetExtractor::init(cfg.seed);
        let n = scenes.len() as f64;
        for k in 0..TARGET_DIM {
            let mean = scenes.iter().map(|s| s.scene.targets()[k]).sum::<f64>() / n;
            let var = scenes.iter().map(|s| (s.scene.targets()[k] - mean).powi(2)).sum::<f64>() / n;
            model.target_mean[k] = mean;
            model.target_std[k] = var.sqrt().max(1e-6);
        }
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        let mut curve = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng_for(cfg.seed, 1000 + epoch as u64));
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size.max(1)) {
                let grads: Vec<_> = batch
                    .par_iter()
                    .map(|&i| model.loss_grad(&scenes[i]))
                    .collect::<Result<_, _>>()?;
                let scale = -cfg.learning_rate / batch.len() as f64;
                for (loss, pg, hg) in &grads {
                    total += loss;
                    for (layer, g) in model.point_mlp.iter_mut().zip(pg) {
                        layer.add_scaled(g, scale);
                    }
                    for (layer, g) in model.head.iter_mut().zip(hg) {
                        layer.add_scaled(g, scale);
                    }
                }
            }
            let mean = total / n;
            if !mean.is_finite() {
                return Err(LabError::InvalidInput(format!("extractor training diverged at epoch {epoch}")));
            }
            curve.push(mean);
        }
        model.calibrate_scalers(scenes)?;
        Ok((model, curve))
    }
}
