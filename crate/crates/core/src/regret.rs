//! Likelihood regret: how much a single input's ELBO improves when the encoder
//! is re-fitted to that input alone.
//!
//! `l_vae` is the ELBO under the frozen trained model, `l_opt` the best ELBO
//! found by a zeroth-order search over the encoder parameters (decoder
//! frozen), and `lr = l_opt - l_vae`. The search starts at the trained encoder
//! and keeps the best evaluated point, so `lr >= 0`.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::vae::{elbo, elbo_with_noise, grad_elbo_with_noise, ElboNoise, VaeError, VaeParams};
use crate::zo::{optimize, FixedPointFormat, OptimizeResult, ZoConfig, ZoError};

/// ELBO draws used when scoring.
pub const DEFAULT_SCORING_MC_SAMPLES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegretError {
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error("sample {}: {source}", .sample.map(|s| s.to_string()).unwrap_or_else(|| "?".into()))]
    Optimization {
        sample: Option<usize>,
        #[source]
        source: ZoError,
    },
    #[error("empty score list")]
    Empty,
    #[error("percentile must lie in (0, 100], got {0}")]
    BadPercentile(f64),
    #[error("score file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for RegretError {
    fn from(e: std::io::Error) -> Self {
        RegretError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrScore {
    pub l_vae: f64,
    pub l_opt: f64,
    pub lr: f64,
}

impl LrScore {
    pub fn new(l_vae: f64, l_opt: f64) -> Self {
        LrScore { l_vae, l_opt, lr: l_opt - l_vae }
    }
}

/// How the per-sample encoder search is carried out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSettings {
    pub zo: ZoConfig,
    pub fixed: Option<FixedPointFormat>,
    pub mc_samples: usize,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        ScoreSettings {
            zo: ZoConfig::default(),
            fixed: None,
            mc_samples: DEFAULT_SCORING_MC_SAMPLES,
        }
    }
}

/// Plain ELBO baseline: higher means more in-distribution.
pub fn score_likelihood(params: &VaeParams, x: &[f64], mc_samples: usize, noise_seed: u64) -> Result<f64, VaeError> {
    Ok(elbo(params, x, mc_samples, noise_seed)?.elbo)
}

/// Negative ELBO as a function of the flattened encoder, with frozen noise.
struct EncoderObjective<'a> {
    work: VaeParams,
    x: &'a [f64],
    noise: ElboNoise,
}

impl<'a> EncoderObjective<'a> {
    fn new(params: &VaeParams, x: &'a [f64], noise: ElboNoise) -> Self {
        EncoderObjective { work: params.clone(), x, noise }
    }

    fn eval(&mut self, encoder: &[f64]) -> f64 {
        match self.work.set_encoder_flat(encoder) {
            Ok(()) => match elbo_with_noise(&self.work, self.x, &self.noise) {
                Ok(v) => -v.elbo,
                Err(_) => f64::NAN,
            },
            Err(_) => f64::NAN,
        }
    }
}

/// Likelihood regret of one sample, plus the optimizer run behind it.
pub fn score_lr_detailed(
    params: &VaeParams,
    x: &[f64],
    settings: &ScoreSettings,
    noise_seed: u64,
) -> Result<(LrScore, OptimizeResult), RegretError> {
    if x.len() != params.input_dim {
        return Err(VaeError::DimensionMismatch { expected: params.input_dim, got: x.len() }.into());
    }
    if settings.mc_samples == 0 {
        return Err(VaeError::InvalidDimensions("mc_samples must be >= 1".into()).into());
    }
    let noise = ElboNoise::draw(settings.mc_samples, params.latent_dim, noise_seed);
    let l_vae = elbo_with_noise(params, x, &noise)?.elbo;
    let theta0 = params.encoder_flat();
    let mut objective = EncoderObjective::new(params, x, noise);
    let result = optimize(&mut |phi: &[f64]| objective.eval(phi), &theta0, &settings.zo, settings.fixed)
        .map_err(|source| RegretError::Optimization { sample: None, source })?;
    // In fixed-point mode the starting encoder is itself quantized; never report
    // a candidate that is worse than the float model.
    let l_opt = (-result.f_best).max(l_vae);
    Ok((LrScore::new(l_vae, l_opt), result))
}

pub fn score_lr(params: &VaeParams, x: &[f64], settings: &ScoreSettings, noise_seed: u64) -> Result<LrScore, RegretError> {
    score_lr_detailed(params, x, settings, noise_seed).map(|(s, _)| s)
}

/// Scores every sample independently. Sample `i` uses noise seed and optimizer
/// seed `base_seed + i`, so results attach to the original index and do not
/// depend on scheduling.
pub fn score_batch(
    params: &VaeParams,
    xs: &[Vec<f64>],
    settings: &ScoreSettings,
    base_seed: u64,
) -> Vec<Result<LrScore, RegretError>> {
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| {
            let seed = base_seed.wrapping_add(i as u64);
            let mut s = *settings;
            s.zo.seed = seed;
            score_lr(params, x, &s, seed).map_err(|e| match e {
                RegretError::Optimization { source, .. } => RegretError::Optimization { sample: Some(i), source },
                other => other,
            })
        })
        .collect()
}

/// Exact-gradient reference: plain gradient ascent on the encoder for `steps`
/// gradient evaluations, keeping the best evaluated ELBO.
pub fn score_lr_gradient(
    params: &VaeParams,
    x: &[f64],
    steps: usize,
    step_size: f64,
    mc_samples: usize,
    noise_seed: u64,
) -> Result<LrScore, RegretError> {
    if x.len() != params.input_dim {
        return Err(VaeError::DimensionMismatch { expected: params.input_dim, got: x.len() }.into());
    }
    let noise = ElboNoise::draw(mc_samples.max(1), params.latent_dim, noise_seed);
    let mut work = params.clone();
    let mut l_vae = None;
    let mut best = f64::NEG_INFINITY;
    let mut encoder = params.encoder_flat();
    for _ in 0..steps.max(1) {
        let (value, grad) = grad_elbo_with_noise(&work, x, &noise)?;
        if !value.elbo.is_finite() {
            break;
        }
        l_vae.get_or_insert(value.elbo);
        best = best.max(value.elbo);
        for (e, g) in encoder.iter_mut().zip(grad.encoder_flat()) {
            *e += step_size * g;
        }
        work.set_encoder_flat(&encoder)?;
    }
    let l_vae = l_vae.ok_or_else(|| VaeError::NonFinite("initial ELBO".into()))?;
    Ok(LrScore::new(l_vae, best))
}

/// Percentile of the `lr` values with linear interpolation between order
/// statistics (rank `p/100 · (n-1)`).
pub fn calibrate_threshold(clean: &[LrScore], percentile: f64) -> Result<f64, RegretError> {
    let values: Vec<f64> = clean.iter().map(|s| s.lr).collect();
    percentile_of(&values, percentile)
}

pub fn percentile_of(values: &[f64], percentile: f64) -> Result<f64, RegretError> {
    if values.is_empty() {
        return Err(RegretError::Empty);
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(RegretError::BadPercentile(percentile));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = percentile / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(v[lo] + (v[hi] - v[lo]) * frac)
}

/// One row of a score dump.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub score: LrScore,
    /// `clean` or `<kind>-<severity>`, e.g. `fog-heavy`.
    pub label: String,
}

pub const SCORE_CSV_HEADER: &str = "sample_id,l_vae,l_opt,lr,label";

pub fn write_scores_csv<W: Write>(mut w: W, records: &[ScoreRecord]) -> std::io::Result<()> {
    writeln!(w, "{SCORE_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.sample_id, r.score.l_vae, r.score.l_opt, r.score.lr, r.label)?;
    }
    Ok(())
}

pub fn read_scores_csv<R: BufRead>(r: R) -> Result<Vec<ScoreRecord>, RegretError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != SCORE_CSV_HEADER {
                return Err(RegretError::Parse { line: 1, msg: format!("expected header {SCORE_CSV_HEADER:?}") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(RegretError::Parse { line: i + 1, msg: format!("expected 5 columns, found {}", cols.len()) });
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| RegretError::Parse { line: i + 1, msg: format!("bad number {s:?}") })
        };
        out.push(ScoreRecord {
            sample_id: cols[0].to_string(),
            score: LrScore { l_vae: num(cols[1])?, l_opt: num(cols[2])?, lr: num(cols[3])? },
            label: cols[4].to_string(),
        });
    }
    Ok(out)
}
