//! End-to-end lab experiment: plan scenes, fit the extractor, extract
//! features, train the VAE, score and tabulate.
//!
//! Every stage is a pure function of [`LabConfig`], so running the stages one
//! at a time (as the CLI does) gives the same numbers as [`run_bench`].

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, ExperimentReport};
use crate::lab::{
    corrupt, fuse, generate_scene, second_modality, CorruptionKind, CorruptionSpec, ExtractorTraining, FeatureVector,
    LabError, Modality, PointCloud, PointSetExtractor, RidgeRegressor, SampleMeta, Severity, ShapeKind, Tap, TapOutputs,
};
use crate::monitor::{r2_of, Monitor, MonitorDecision, MonitorSummary, StreamSample};
use crate::regret::{calibrate_threshold, score_batch, LrScore, RegretError, ScoreRecord, ScoreSettings};
use crate::rng::derive_seed;
use crate::vae::{train, TrainConfig, TrainOutcome, VaeError, VaeParams};
use crate::zo::{FixedPointFormat, SpsaSchedule, ZoConfig, ZoMethod, ZoSchedule};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Regret(#[from] RegretError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Clean scenes for the VAE and the downstream regressor.
    Train,
    /// Clean scenes for threshold calibration.
    Calib,
    /// Clean scenes plus one corrupted group per (kind, severity).
    Test,
    /// Monitor stream: clean and heavily corrupted scenes alternating, the
    /// corrupted ones cycling through the configured kinds.
    Stream,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Calib, Split::Test, Split::Stream];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Calib => "calib",
            Split::Test => "test",
            Split::Stream => "stream",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Split::Train => 11,
            Split::Calib => 12,
            Split::Test => 13,
            Split::Stream => 14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSettings {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for VaeSettings {
    fn default() -> Self {
        VaeSettings { hidden: vec![64, 64], latent_dim: 8, epochs: 150, batch_size: 32, learning_rate: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSettings {
    pub scenes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ExtractorSettings {
    fn default() -> Self {
        let d = ExtractorTraining::default();
        ExtractorSettings { scenes: d.scenes, epochs: d.epochs, batch_size: d.batch_size, learning_rate: d.learning_rate }
    }
}

/// SPSA gains for scoring lab features. The encoder has ~7k weights, so the
/// generic defaults (c = 0.1) probe far outside the region where the ELBO is
/// locally smooth and no probe ever improves on the start.
pub const LAB_SPSA: SpsaSchedule = SpsaSchedule { a: 1e-3, big_a: 10.0, alpha: 0.602, c: 1e-2, gamma: 0.101 };
pub const LAB_ZO: ZoSchedule = ZoSchedule { mu: 1e-3, q: 1, step: 1e-4 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSettings {
    pub optimizer: ZoMethod,
    pub iterations: usize,
    pub mc_samples: usize,
    /// Fixed-point format such as `Q16.16`; absent means float evaluation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<String>,
    pub spsa: SpsaSchedule,
    pub zo: ZoSchedule,
    /// Percentile of clean-calibration LR used as the monitor threshold.
    pub threshold_percentile: f64,
}

impl Default for ScoringSettings {
    fn default() -> Self {
        ScoringSettings {
            optimizer: ZoMethod::Spsa,
            iterations: 100,
            mc_samples: crate::regret::DEFAULT_SCORING_MC_SAMPLES,
            fixed_point: None,
            spsa: LAB_SPSA,
            zo: LAB_ZO,
            threshold_percentile: 95.0,
        }
    }
}

/// Everything that determines an experiment. Mirrors the CLI flags and is the
/// shape of the TOML config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub seed: u64,
    pub tap: Tap,
    /// Concatenate the camera histogram onto the lidar features.
    pub fusion: bool,
    pub n_train: usize,
    pub n_calib: usize,
    /// Samples per test group (clean, and each corruption group).
    pub n_test: usize,
    /// Length of the monitor stream, half clean and half heavily corrupted.
    pub n_stream: usize,
    pub kinds: Vec<CorruptionKind>,
    pub severities: Vec<Severity>,
    pub ridge_lambda: f64,
    pub extractor: ExtractorSettings,
    pub vae: VaeSettings,
    pub scoring: ScoringSettings,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            seed: 0,
            tap: Tap::Encoder,
            fusion: false,
            n_train: 1000,
            n_calib: 200,
            n_test: 200,
            n_stream: 400,
            kinds: CorruptionKind::ALL.to_vec(),
            severities: vec![Severity::Heavy, Severity::Moderate],
            ridge_lambda: 1e-3,
            extractor: ExtractorSettings::default(),
            vae: VaeSettings::default(),
            scoring: ScoringSettings::default(),
        }
    }
}

impl LabConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn fixed_format(&self) -> Result<Option<FixedPointFormat>, PipelineError> {
        match &self.scoring.fixed_point {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|e| PipelineError::Config(format!("fixed point: {e}"))),
        }
    }

    pub fn modality(&self) -> Modality {
        if self.fusion {
            Modality::Fused
        } else {
            Modality::Lidar
        }
    }

    pub fn extractor_training(&self) -> ExtractorTraining {
        ExtractorTraining {
            scenes: self.extractor.scenes,
            epochs: self.extractor.epochs,
            batch_size: self.extractor.batch_size,
            learning_rate: self.extractor.learning_rate,
            seed: derive_seed(self.seed, 1),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.vae.epochs,
            batch_size: self.vae.batch_size,
            learning_rate: self.vae.learning_rate,
            mc_samples: 1,
            seed: derive_seed(self.seed, 3),
        }
    }

    pub fn score_settings(&self) -> Result<ScoreSettings, PipelineError> {
        let zo = ZoConfig {
            method: self.scoring.optimizer,
            iterations: self.scoring.iterations,
            spsa: self.scoring.spsa,
            zo: self.scoring.zo,
            seed: 0,
        };
        zo.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(ScoreSettings { zo, fixed: self.fixed_format()?, mc_samples: self.scoring.mc_samples })
    }

    /// Base seed for scoring a split; sample `i` uses `base + i`.
    pub fn score_seed(&self, split: Split) -> u64 {
        derive_seed(self.seed, 400 + split.salt())
    }

    /// Key/value view of the config for report fingerprints.
    pub fn fingerprint(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("config".into(), self.to_toml());
        m.insert("crate_version".into(), env!("CARGO_PKG_VERSION").into());
        m
    }
}

fn group_label(c: &Option<CorruptionSpec>) -> String {
    c.map(|s| s.label()).unwrap_or_else(|| crate::eval::report::CLEAN_LABEL.into())
}

/// Lists the samples of a split. Scene `i` of a group uses shape `i mod 3`.
pub fn plan_split(cfg: &LabConfig, split: Split) -> Vec<SampleMeta> {
    if split == Split::Stream {
        return plan_stream(cfg);
    }
    let mut groups: Vec<Option<(CorruptionKind, Severity)>> = vec![None];
    let n = match split {
        Split::Train => cfg.n_train,
        Split::Calib => cfg.n_calib,
        Split::Test => {
            for &sev in &cfg.severities {
                for &kind in &cfg.kinds {
                    groups.push(Some((kind, sev)));
                }
            }
            cfg.n_test
        }
        Split::Stream => unreachable!("handled by plan_stream"),
    };
    let split_seed = derive_seed(cfg.seed, split.salt());
    let mut out = Vec::with_capacity(n * groups.len());
    for (g, group) in groups.iter().enumerate() {
        let group_seed = derive_seed(split_seed, g as u64);
        for i in 0..n {
            let scene_seed = derive_seed(group_seed, i as u64);
            let shape = ShapeKind::ALL[i % 3];
            let corruption = group.map(|(kind, severity)| CorruptionSpec::new(kind, severity, derive_seed(scene_seed, 7)));
            let scene = generate_scene(shape, scene_seed).scene;
            out.push(SampleMeta { sample_id: out.len(), label: group_label(&corruption), scene_seed, scene, corruption });
        }
    }
    out
}

fn plan_stream(cfg: &LabConfig) -> Vec<SampleMeta> {
    let split_seed = derive_seed(cfg.seed, Split::Stream.salt());
    (0..cfg.n_stream)
        .map(|i| {
            let scene_seed = derive_seed(split_seed, i as u64);
            let shape = ShapeKind::ALL[(i / 2) % 3];
            let corruption = (i % 2 == 1 && !cfg.kinds.is_empty()).then(|| {
                let kind = cfg.kinds[(i / 2) % cfg.kinds.len()];
                CorruptionSpec::new(kind, Severity::Heavy, derive_seed(scene_seed, 7))
            });
            let scene = generate_scene(shape, scene_seed).scene;
            SampleMeta { sample_id: i, label: group_label(&corruption), scene_seed, scene, corruption }
        })
        .collect()
}

/// Regenerates the (possibly corrupted) lidar cloud and the cloud the camera
/// sees. The camera shares only the weather-like corruptions.
pub fn materialize(meta: &SampleMeta) -> Result<(PointCloud, PointCloud), LabError> {
    let clean = generate_scene(meta.scene.shape, meta.scene_seed);
    match &meta.corruption {
        None => Ok((clean.clone(), clean)),
        Some(spec) => {
            let lidar = corrupt(&clean, spec)?;
            let camera = if CorruptionKind::SHARED_WITH_CAMERA.contains(&spec.kind) { lidar.clone() } else { clean };
            Ok((lidar, camera))
        }
    }
}

/// Extractor outputs at every tap plus the camera histogram of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleFeatures {
    pub taps: TapOutputs,
    pub camera: Vec<f64>,
}

impl SampleFeatures {
    /// Feature vector at `tap`, fused with the camera when `fusion` is set,
    /// rounded through `f32` like a feature file.
    pub fn vector(&self, tap: Tap, fusion: bool) -> FeatureVector {
        let lidar = FeatureVector::new(self.taps.get(tap).to_vec(), tap, Modality::Lidar);
        let v = if fusion {
            let cam = FeatureVector::new(self.camera.clone(), tap, Modality::Camera);
            fuse(&lidar, &cam).expect("modalities are fixed here")
        } else {
            lidar
        };
        v.to_f32_precision()
    }
}

pub fn fit_extractor(cfg: &LabConfig) -> Result<(PointSetExtractor, Vec<f64>), LabError> {
    let t = cfg.extractor_training();
    let seed = derive_seed(cfg.seed, 10);
    let scenes: Vec<PointCloud> =
        (0..t.scenes).map(|i| generate_scene(ShapeKind::ALL[i % 3], derive_seed(seed, i as u64))).collect();
    PointSetExtractor::fit(&scenes, &t)
}

pub fn extract_split(extractor: &PointSetExtractor, metas: &[SampleMeta]) -> Result<Vec<SampleFeatures>, LabError> {
    metas
        .par_iter()
        .map(|m| {
            let (lidar, camera) = materialize(m)?;
            Ok(SampleFeatures {
                taps: extractor.taps(&lidar)?,
                camera: second_modality(&camera, derive_seed(m.scene_seed, 0xCA)).values,
            })
        })
        .collect()
}

pub fn vectors(features: &[SampleFeatures], tap: Tap, fusion: bool) -> Vec<Vec<f64>> {
    features.iter().map(|f| f.vector(tap, fusion).values).collect()
}

pub fn train_vae(cfg: &LabConfig, data: &[Vec<f64>]) -> Result<TrainOutcome, PipelineError> {
    let dim = data.first().map(|x| x.len()).ok_or(VaeError::EmptyDataset)?;
    let init = VaeParams::init(dim, cfg.vae.latent_dim, &cfg.vae.hidden, derive_seed(cfg.seed, 2))?;
    Ok(train(&init, data, &cfg.train_config())?)
}

/// Scores a split with the configured optimizer; the first failing sample
/// aborts with its index.
pub fn score_split(
    cfg: &LabConfig,
    params: &VaeParams,
    data: &[Vec<f64>],
    metas: &[SampleMeta],
    split: Split,
) -> Result<Vec<ScoreRecord>, PipelineError> {
    let settings = cfg.score_settings()?;
    let scores: Vec<LrScore> =
        score_batch(params, data, &settings, cfg.score_seed(split)).into_iter().collect::<Result<_, _>>()?;
    Ok(metas
        .iter()
        .zip(scores)
        .map(|(m, score)| ScoreRecord { sample_id: m.sample_id.to_string(), score, label: m.label.clone() })
        .collect())
}

pub fn fit_ridge(cfg: &LabConfig, data: &[Vec<f64>], metas: &[SampleMeta]) -> Result<RidgeRegressor, LabError> {
    let targets: Vec<[f64; 6]> = metas.iter().map(|m| m.scene.targets()).collect();
    RidgeRegressor::fit(data, &targets, cfg.ridge_lambda)
}

/// Feature vectors paired with scene targets, ready for the monitor.
pub fn stream_samples(data: &[Vec<f64>], metas: &[SampleMeta]) -> Vec<StreamSample> {
    data.iter()
        .zip(metas)
        .map(|(x, m)| StreamSample {
            sample_id: m.sample_id.to_string(),
            features: x.clone(),
            truth: Some(m.scene.targets().to_vec()),
        })
        .collect()
}

/// Result of the filtering experiment.
pub struct MonitorOutcome {
    pub decisions: Vec<MonitorDecision>,
    pub summary: MonitorSummary,
    /// Regressor R² on the clean half of the stream.
    pub r2_clean: f64,
    pub stream_meta: Vec<SampleMeta>,
}

/// Threshold from clean calibration scores at the configured percentile.
pub fn calibrate(cfg: &LabConfig, params: &VaeParams, calib: &[Vec<f64>], metas: &[SampleMeta]) -> Result<f64, PipelineError> {
    let scores: Vec<LrScore> = score_split(cfg, params, calib, metas, Split::Calib)?.into_iter().map(|r| r.score).collect();
    Ok(calibrate_threshold(&scores, cfg.scoring.threshold_percentile)?)
}

pub fn run_monitor_experiment(cfg: &LabConfig) -> Result<MonitorOutcome, PipelineError> {
    let (extractor, _) = fit_extractor(cfg)?;
    let features = |split: Split| -> Result<(Vec<SampleMeta>, Vec<Vec<f64>>), PipelineError> {
        let meta = plan_split(cfg, split);
        let f = extract_split(&extractor, &meta)?;
        Ok((meta, vectors(&f, cfg.tap, cfg.fusion)))
    };
    let (train_meta, train) = features(Split::Train)?;
    let vae = train_vae(cfg, &train)?;
    let ridge = fit_ridge(cfg, &train, &train_meta)?;
    let (calib_meta, calib) = features(Split::Calib)?;
    let threshold = calibrate(cfg, &vae.params, &calib, &calib_meta)?;
    let (stream_meta, stream) = features(Split::Stream)?;
    let samples = stream_samples(&stream, &stream_meta);
    let clean: Vec<StreamSample> =
        samples.iter().zip(&stream_meta).filter(|(_, m)| m.corruption.is_none()).map(|(s, _)| s.clone()).collect();
    let r2_clean = r2_of(&ridge, &clean)?;
    let monitor = Monitor {
        vae: &vae.params,
        regressor: &ridge,
        settings: cfg.score_settings()?,
        threshold,
        window: 64,
        base_seed: cfg.score_seed(Split::Stream),
    };
    let (decisions, summary) = monitor.run_collect(samples);
    Ok(MonitorOutcome { decisions, summary, r2_clean, stream_meta })
}

/// Artifacts of a full run.
pub struct BenchOutput {
    pub extractor: PointSetExtractor,
    pub vae: TrainOutcome,
    pub report: ExperimentReport,
    pub test_meta: Vec<SampleMeta>,
    pub test_features: Vec<SampleFeatures>,
    pub train_meta: Vec<SampleMeta>,
    pub train_features: Vec<SampleFeatures>,
}

pub fn run_bench(cfg: &LabConfig) -> Result<BenchOutput, PipelineError> {
    let (extractor, _) = fit_extractor(cfg)?;
    let train_meta = plan_split(cfg, Split::Train);
    let train_features = extract_split(&extractor, &train_meta)?;
    let vae = train_vae(cfg, &vectors(&train_features, cfg.tap, cfg.fusion))?;
    let test_meta = plan_split(cfg, Split::Test);
    let test_features = extract_split(&extractor, &test_meta)?;
    let records = score_split(cfg, &vae.params, &vectors(&test_features, cfg.tap, cfg.fusion), &test_meta, Split::Test)?;
    let report = ExperimentReport::from_records(records, cfg.fingerprint())?;
    Ok(BenchOutput { extractor, vae, report, test_meta, test_features, train_meta, train_features })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = LabConfig::default();
        cfg.scoring.fixed_point = Some("Q16.16".into());
        cfg.kinds = vec![CorruptionKind::Snow];
        let back = LabConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(LabConfig::from_toml("bogus = 1").is_err());
        assert_eq!(LabConfig::from_toml("seed = 4").unwrap().seed, 4);
    }

    #[test]
    fn plan_is_deterministic_and_labelled() {
        let cfg = LabConfig { n_test: 5, kinds: vec![CorruptionKind::Fog, CorruptionKind::Crosstalk], ..Default::default() };
        let plan = plan_split(&cfg, Split::Test);
        assert_eq!(plan.len(), 5 * (1 + 2 * 2));
        assert_eq!(plan, plan_split(&cfg, Split::Test));
        assert_eq!(plan[0].label, "clean");
        assert_eq!(plan[5].label, "fog-heavy");
        assert!(plan.iter().enumerate().all(|(i, m)| m.sample_id == i));
        let train = plan_split(&cfg, Split::Train);
        assert_ne!(train[0].scene_seed, plan[0].scene_seed);
    }

    #[test]
    fn camera_sees_only_weather_corruptions() {
        let cfg = LabConfig { n_test: 1, ..Default::default() };
        for m in plan_split(&cfg, Split::Test).iter().skip(1) {
            let (lidar, camera) = materialize(m).unwrap();
            let kind = m.corruption.unwrap().kind;
            if CorruptionKind::SHARED_WITH_CAMERA.contains(&kind) {
                assert_eq!(lidar, camera);
            } else {
                assert_eq!(camera, generate_scene(m.scene.shape, m.scene_seed));
            }
        }
    }
}
