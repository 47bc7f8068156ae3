//! Synthetic LiDAR degradations.
//!
//! Moderate magnitudes below; heavy doubles every fraction and noise scale.
//!
//! | kind            | moderate effect                                                        |
//! |-----------------|------------------------------------------------------------------------|
//! | fog             | Gaussian noise, σ = 2% of range, plus 5% random drops                  |
//! | snow            | 5% extra points 0.5 to 3 m from the sensor, plus σ = 1% of range jitter|
//! | rain            | σ = 1.5% of range jitter plus 3% random drops                          |
//! | motion_blur     | shift along one shared random direction, per-point N(0, 0.05 m)        |
//! | beam_missing    | drop 25% of points, whole elevation bands first                        |
//! | incomplete_echo | drop 25% of points, chosen among the far (weak-return) half            |
//! | cross_sensor    | duplicate 15% of points shifted by a fixed 0.3 m offset                |
//! | crosstalk       | add 10% uniform outliers inside the 3× bounding box                    |

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scene::{PointCloud, MIN_POINTS};
use super::LabError;
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Fog,
    Snow,
    Rain,
    MotionBlur,
    BeamMissing,
    IncompleteEcho,
    CrossSensor,
    Crosstalk,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 8] = [
        CorruptionKind::Fog,
        CorruptionKind::Snow,
        CorruptionKind::Rain,
        CorruptionKind::MotionBlur,
        CorruptionKind::BeamMissing,
        CorruptionKind::IncompleteEcho,
        CorruptionKind::CrossSensor,
        CorruptionKind::Crosstalk,
    ];

    /// Kinds that also reach the camera (everything except internal LiDAR faults
    /// and beam/echo losses).
    pub const SHARED_WITH_CAMERA: [CorruptionKind; 4] =
        [CorruptionKind::Fog, CorruptionKind::Snow, CorruptionKind::Rain, CorruptionKind::MotionBlur];

    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::Fog => "fog",
            CorruptionKind::Snow => "snow",
            CorruptionKind::Rain => "rain",
            CorruptionKind::MotionBlur => "motion_blur",
            CorruptionKind::BeamMissing => "beam_missing",
            CorruptionKind::IncompleteEcho => "incomplete_echo",
            CorruptionKind::CrossSensor => "cross_sensor",
            CorruptionKind::Crosstalk => "crosstalk",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::Parse(format!("unknown corruption kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Heavy,
    Moderate,
}

impl Severity {
    pub const ALL: [Severity; 2] = [Severity::Heavy, Severity::Moderate];

    /// Multiplier on the moderate magnitudes.
    pub fn scale(&self) -> f64 {
        match self {
            Severity::Heavy => 2.0,
            Severity::Moderate => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Severity::Heavy => "heavy",
            Severity::Moderate => "moderate",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Severity {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heavy" => Ok(Severity::Heavy),
            "moderate" => Ok(Severity::Moderate),
            _ => Err(LabError::Parse(format!("unknown severity {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
    /// Replaces the severity multiplier when set; `Some(0.0)` disables the effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: Severity, seed: u64) -> Self {
        CorruptionSpec { kind, severity, seed, magnitude: None }
    }

    pub fn scale(&self) -> f64 {
        self.magnitude.unwrap_or_else(|| self.severity.scale())
    }

    /// `<kind>-<severity>`, e.g. `fog-heavy`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.kind, self.severity)
    }
}

const CROSS_SENSOR_OFFSET: [f64; 3] = [0.0, 0.3, 0.0];

fn range(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn count(frac: f64, n: usize) -> usize {
    ((frac * n as f64).floor() as usize).min(n)
}

fn range_jitter<R: Rng>(points: &mut [[f64; 3]], rel_sigma: f64, rng: &mut R) {
    if rel_sigma <= 0.0 {
        return;
    }
    for p in points.iter_mut() {
        let s = rel_sigma * range(p);
        for v in p.iter_mut() {
            *v += s * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

fn drop_random<R: Rng>(points: &mut Vec<[f64; 3]>, k: usize, rng: &mut R) {
    if k == 0 {
        return;
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.shuffle(rng);
    let mut keep = vec![true; points.len()];
    for &i in &idx[..k] {
        keep[i] = false;
    }
    let mut it = keep.iter();
    points.retain(|_| *it.next().unwrap());
}

fn random_unit<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let d: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = range(&d);
        if n > 1e-12 {
            return [d[0] / n, d[1] / n, d[2] / n];
        }
    }
}

/// Applies the corruption; the ground-truth scene is carried over unchanged.
pub fn corrupt(pc: &PointCloud, spec: &CorruptionSpec) -> Result<PointCloud, LabError> {
    let m = spec.scale();
    if !(m >= 0.0 && m.is_finite()) {
        return Err(LabError::InvalidInput(format!("corruption magnitude {m}")));
    }
    let mut rng = rng_for(spec.seed, 0xC0_44 + spec.kind as u64);
    let n = pc.points.len();
    let mut points = pc.points.clone();

    match spec.kind {
        CorruptionKind::Fog => {
            range_jitter(&mut points, 0.02 * m, &mut rng);
            drop_random(&mut points, count(0.05 * m, n), &mut rng);
        }
        CorruptionKind::Snow => {
            range_jitter(&mut points, 0.01 * m, &mut rng);
            for _ in 0..count(0.05 * m, n) {
                let d = random_unit(&mut rng);
                let r = rng.random_range(0.5..3.0);
                points.push([d[0] * r, d[1] * r, d[2] * r]);
            }
        }
        CorruptionKind::Rain => {
            range_jitter(&mut points, 0.015 * m, &mut rng);
            drop_random(&mut points, count(0.03 * m, n), &mut rng);
        }
        CorruptionKind::MotionBlur => {
            if m > 0.0 {
                let dir = random_unit(&mut rng);
                let mag = Normal::new(0.0, 0.05 * m).unwrap();
                for p in points.iter_mut() {
                    let s: f64 = rng.sample(mag);
                    for a in 0..3 {
                        p[a] += s * dir[a];
                    }
                }
            }
        }
        CorruptionKind::BeamMissing => {
            let k = count(0.25 * m, n);
            if k > 0 {
                const BANDS: usize = 16;
                let mut by_elev: Vec<usize> = (0..n).collect();
                let elevation = |p: &[f64; 3]| p[2].atan2((p[0] * p[0] + p[1] * p[1]).sqrt());
                by_elev.sort_by(|&a, &b| elevation(&points[a]).total_cmp(&elevation(&points[b])));
                let mut bands: Vec<&[usize]> = by_elev.chunks(n.div_ceil(BANDS)).collect();
                bands.shuffle(&mut rng);
                let mut keep = vec![true; n];
                for &i in bands.iter().flat_map(|b| b.iter()).take(k) {
                    keep[i] = false;
                }
                let mut it = keep.iter();
                points.retain(|_| *it.next().unwrap());
            }
        }
        CorruptionKind::IncompleteEcho => {
            let k = count(0.25 * m, n);
            if k > 0 {
                let mut by_range: Vec<usize> = (0..n).collect();
                by_range.sort_by(|&a, &b| range(&points[b]).total_cmp(&range(&points[a])));
                // weak returns: the farther half
                let mut weak = by_range[..n - n / 2].to_vec();
                weak.shuffle(&mut rng);
                let mut keep = vec![true; n];
                for &i in weak.iter().take(k) {
                    keep[i] = false;
                }
                let mut it = keep.iter();
                points.retain(|_| *it.next().unwrap());
            }
        }
        CorruptionKind::CrossSensor => {
            let k = count(0.15 * m, n);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            for &i in &idx[..k] {
                let p = pc.points[i];
                points.push([p[0] + CROSS_SENSOR_OFFSET[0], p[1] + CROSS_SENSOR_OFFSET[1], p[2] + CROSS_SENSOR_OFFSET[2]]);
            }
        }
        CorruptionKind::Crosstalk => {
            let k = count(0.10 * m, n);
            let (lo, hi) = pc.bounds();
            for _ in 0..k {
                let mut p = [0.0; 3];
                for a in 0..3 {
                    let center = 0.5 * (lo[a] + hi[a]);
                    let half = 1.5 * (hi[a] - lo[a]);
                    p[a] = if half > 0.0 { rng.random_range(center - half..center + half) } else { center };
                }
                points.push(p);
            }
        }
    }

    if points.len() < MIN_POINTS {
        return Err(LabError::TooFewPoints { got: points.len(), min: MIN_POINTS });
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(LabError::InvalidInput("corruption produced non-finite coordinates".into()));
    }
    Ok(PointCloud { points, scene: pc.scene })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::scene::{generate_scene, ShapeKind, SCENE_POINTS};

    fn clean() -> PointCloud {
        generate_scene(ShapeKind::Box, 21)
    }

    #[test]
    fn beam_missing_counts() {
        let pc = clean();
        let m = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::BeamMissing, Severity::Moderate, 1)).unwrap();
        assert_eq!(m.len(), SCENE_POINTS - SCENE_POINTS / 4);
        let h = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::BeamMissing, Severity::Heavy, 1)).unwrap();
        assert_eq!(h.len(), SCENE_POINTS - SCENE_POINTS / 2);
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let pc = clean();
        for kind in CorruptionKind::ALL {
            let spec = CorruptionSpec { magnitude: Some(0.0), ..CorruptionSpec::new(kind, Severity::Heavy, 3) };
            assert_eq!(corrupt(&pc, &spec).unwrap(), pc, "{kind}");
        }
    }

    #[test]
    fn crosstalk_heavy_adds_outliers_in_tripled_box() {
        let pc = clean();
        let out = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::Crosstalk, Severity::Heavy, 5)).unwrap();
        let added = (0.2 * SCENE_POINTS as f64).floor() as usize;
        assert_eq!(out.len(), SCENE_POINTS + added);
        assert_eq!(&out.points[..SCENE_POINTS], &pc.points[..]);
        let (lo, hi) = pc.bounds();
        for p in &out.points[SCENE_POINTS..] {
            for a in 0..3 {
                let c = 0.5 * (lo[a] + hi[a]);
                assert!((p[a] - c).abs() <= 1.5 * (hi[a] - lo[a]));
            }
        }
    }

    #[test]
    fn cross_sensor_duplicates_with_offset() {
        let pc = clean();
        let out = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::CrossSensor, Severity::Moderate, 2)).unwrap();
        let k = (0.15 * SCENE_POINTS as f64).floor() as usize;
        assert_eq!(out.len(), SCENE_POINTS + k);
        for p in &out.points[SCENE_POINTS..] {
            let src = [p[0], p[1] - 0.3, p[2]];
            assert!(pc.points.iter().any(|q| (q[0] - src[0]).abs() < 1e-12 && (q[1] - src[1]).abs() < 1e-12 && (q[2] - src[2]).abs() < 1e-12));
        }
    }

    #[test]
    fn incomplete_echo_drops_far_points() {
        let pc = clean();
        let out = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::IncompleteEcho, Severity::Heavy, 2)).unwrap();
        assert_eq!(out.len(), SCENE_POINTS / 2);
        let max_kept = out.points.iter().map(range).fold(0.0, f64::max);
        let mut ranges: Vec<f64> = pc.points.iter().map(range).collect();
        ranges.sort_by(f64::total_cmp);
        assert!(max_kept <= ranges[SCENE_POINTS / 2 - 1] + 1e-12);
    }

    #[test]
    fn snow_adds_points_near_sensor() {
        let pc = clean();
        let out = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::Snow, Severity::Moderate, 2)).unwrap();
        assert_eq!(out.len(), SCENE_POINTS + 12);
        assert!(out.points[SCENE_POINTS..].iter().all(|p| range(p) < 3.0));
    }

    #[test]
    fn deterministic_and_preserves_ground_truth() {
        let pc = clean();
        for kind in CorruptionKind::ALL {
            for sev in Severity::ALL {
                let spec = CorruptionSpec::new(kind, sev, 77);
                let a = corrupt(&pc, &spec).unwrap();
                assert_eq!(a, corrupt(&pc, &spec).unwrap());
                assert_eq!(a.scene, pc.scene);
                assert!(a.len() >= MIN_POINTS);
            }
        }
    }

    #[test]
    fn tiny_clouds_are_rejected() {
        let mut pc = clean();
        pc.points.truncate(18);
        let err = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::BeamMissing, Severity::Heavy, 0)).unwrap_err();
        assert!(matches!(err, LabError::TooFewPoints { got: 9, .. }));
    }

    #[test]
    fn names_roundtrip() {
        for k in CorruptionKind::ALL {
            assert_eq!(k.name().parse::<CorruptionKind>().unwrap(), k);
        }
        assert_eq!(CorruptionSpec::new(CorruptionKind::MotionBlur, Severity::Heavy, 0).label(), "motion_blur-heavy");
    }
}
