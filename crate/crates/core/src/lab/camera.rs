//! Camera-like modality: a coarse top-down occupancy histogram of the cloud.

use rand::Rng;
use rand_distr::Normal;

use super::scene::PointCloud;
use super::{FeatureVector, Modality, Tap};
use crate::rng::rng_for;

pub const GRID: usize = 4;
pub const CAMERA_DIM: usize = GRID * GRID;
/// Bin width in meters along both axes.
pub const BIN_WIDTH: f64 = 4.0;
/// The grid spans x in [0, 16) ahead of the sensor and y in [-8, 8).
pub const GRID_ORIGIN: [f64; 2] = [0.0, -8.0];
pub const CAMERA_NOISE: f64 = 0.005;

fn bin(v: f64, origin: f64) -> usize {
    let i = ((v - origin) / BIN_WIDTH).floor();
    // points off the grid land in the nearest edge bin
    i.clamp(0.0, (GRID - 1) as f64) as usize
}

/// Normalized x-y occupancy, index `ix * GRID + iy`. Sums to 1.
pub fn occupancy_histogram(pc: &PointCloud) -> Vec<f64> {
    let mut h = vec![0.0; CAMERA_DIM];
    if pc.points.is_empty() {
        return h;
    }
    for p in &pc.points {
        h[bin(p[0], GRID_ORIGIN[0]) * GRID + bin(p[1], GRID_ORIGIN[1])] += 1.0;
    }
    let n = pc.points.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Occupancy histogram plus seeded Gaussian sensor noise.
pub fn second_modality(pc: &PointCloud, seed: u64) -> FeatureVector {
    let mut rng = rng_for(seed, 0xCA3E);
    let noise = Normal::new(0.0, CAMERA_NOISE).unwrap();
    let values = occupancy_histogram(pc).into_iter().map(|v| v + rng.sample(noise)).collect();
    // the camera has no tap hierarchy; tagged with the deepest tap
    FeatureVector::new(values, Tap::Encoder, Modality::Camera)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::scene::{generate_scene, generate_scene_with, SceneParams, ShapeKind};

    #[test]
    fn histogram_normalized_with_empty_bins() {
        let pc = generate_scene(ShapeKind::Sphere, 3);
        let h = occupancy_histogram(&pc);
        assert_eq!(h.len(), CAMERA_DIM);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h.iter().filter(|&&v| v == 0.0).count() > 0);
    }

    #[test]
    fn deterministic_under_seed() {
        let pc = generate_scene(ShapeKind::Box, 3);
        assert_eq!(second_modality(&pc, 5), second_modality(&pc, 5));
        assert_ne!(second_modality(&pc, 5), second_modality(&pc, 6));
        assert_eq!(second_modality(&pc, 5).dim(), 16);
    }

    #[test]
    fn translation_by_one_bin_shifts_pattern() {
        // box confined to the cell x∈[8,12), y∈[0,4)
        let scene = SceneParams { centroid: [10.0, 2.0, 0.5], extent: [1.0, 1.0, 0.5], shape: ShapeKind::Box };
        let pc = generate_scene_with(scene, 1);
        let h = occupancy_histogram(&pc);
        assert_eq!(h[2 * GRID + 2], 1.0);
        let moved = occupancy_histogram(&pc.translated([BIN_WIDTH, 0.0, 0.0]));
        assert_eq!(moved[3 * GRID + 2], 1.0);
        let moved_y = occupancy_histogram(&pc.translated([0.0, -BIN_WIDTH, 0.0]));
        assert_eq!(moved_y[2 * GRID + 1], 1.0);
    }
}
