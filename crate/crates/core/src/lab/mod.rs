//! Synthetic sensor laboratory: scenes, corruptions, a point-set feature
//! extractor, a camera-like second modality and a downstream regressor.

pub mod camera;
pub mod corrupt;
pub mod extractor;
pub mod features_io;
pub mod regressor;
pub mod scene;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use camera::{second_modality, CAMERA_DIM};
pub use corrupt::{corrupt, CorruptionKind, CorruptionSpec, Severity};
pub use extractor::{ExtractorTraining, PointSetExtractor, Scaler, TapOutputs, FEATURE_DIM};
pub use features_io::{read_feature_file, write_feature_file, FeatureFile, SampleMeta};
pub use regressor::{r2, RidgeRegressor};
pub use scene::{generate_scene, generate_scene_with, PointCloud, SceneParams, ShapeKind, MIN_POINTS, SCENE_POINTS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabError {
    #[error("point cloud has {got} points, at least {min} required")]
    TooFewPoints { got: usize, min: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("r2 undefined: truths are constant")]
    ConstantTruth,
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Depth at which the extractor is read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tap {
    Point,
    Feature,
    Encoder,
}

impl Tap {
    pub const ALL: [Tap; 3] = [Tap::Point, Tap::Feature, Tap::Encoder];

    pub fn name(self) -> &'static str {
        match self {
            Tap::Point => "point",
            Tap::Feature => "feature",
            Tap::Encoder => "encoder",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Tap> {
        Tap::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tap {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "point" | "point_level" => Ok(Tap::Point),
            "feature" | "feature_level" => Ok(Tap::Feature),
            "encoder" | "encoder_level" => Ok(Tap::Encoder),
            _ => Err(LabError::Parse(format!("unknown tap {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Lidar,
    Camera,
    Fused,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Lidar, Modality::Camera, Modality::Fused];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Lidar => "lidar",
            Modality::Camera => "camera",
            Modality::Fused => "fused",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Modality> {
        Modality::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub tap: Tap,
    pub modality: Modality,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, tap: Tap, modality: Modality) -> Self {
        FeatureVector { values, tap, modality }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Rounds every value through `f32`, matching what a feature file stores.
    pub fn to_f32_precision(&self) -> FeatureVector {
        FeatureVector { values: self.values.iter().map(|&v| v as f32 as f64).collect(), ..*self }
    }
}

/// Concatenation fusion: lidar values first, then camera values.
pub fn fuse(lidar: &FeatureVector, camera: &FeatureVector) -> Result<FeatureVector, LabError> {
    if lidar.modality != Modality::Lidar || camera.modality != Modality::Camera {
        return Err(LabError::InvalidInput(format!(
            "fuse expects (lidar, camera), got ({}, {})",
            lidar.modality, camera.modality
        )));
    }
    let mut values = Vec::with_capacity(lidar.dim() + camera.dim());
    values.extend_from_slice(&lidar.values);
    values.extend_from_slice(&camera.values);
    Ok(FeatureVector::new(values, lidar.tap, Modality::Fused))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_is_lossless_concatenation() {
        let l = FeatureVector::new((0..32).map(|i| i as f64 * 0.1).collect(), Tap::Encoder, Modality::Lidar);
        let c = FeatureVector::new((0..16).map(|i| -(i as f64)).collect(), Tap::Encoder, Modality::Camera);
        let f = fuse(&l, &c).unwrap();
        assert_eq!(f.dim(), 48);
        assert_eq!(&f.values[..32], &l.values[..]);
        assert_eq!(&f.values[32..], &c.values[..]);
        assert_eq!(f.modality, Modality::Fused);
        assert!(fuse(&c, &l).is_err());
    }

    #[test]
    fn tap_names_round_trip() {
        for t in Tap::ALL {
            assert_eq!(t.name().parse::<Tap>().unwrap(), t);
            assert_eq!(Tap::from_code(t.code()), Some(t));
        }
        assert!("deep".parse::<Tap>().is_err());
    }
}
