use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;

pub const SCENE_POINTS: usize = 256;
/// Standard deviation of the surface noise, meters.
pub const SURFACE_NOISE: f64 = 0.01;
/// Smallest cloud any generator or corruption may produce.
pub const MIN_POINTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    Sphere,
    PlaneComposite,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Box, ShapeKind::Sphere, ShapeKind::PlaneComposite];
}

/// Ground truth of a scene. `extent` holds half-sizes (semi-axes for spheres).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub centroid: [f64; 3],
    pub extent: [f64; 3],
    pub shape: ShapeKind,
}

impl SceneParams {
    /// Draws a scene in front of a sensor at the origin.
    pub fn random<R: Rng + ?Sized>(shape: ShapeKind, rng: &mut R) -> Self {
        SceneParams {
            centroid: [rng.random_range(6.0..14.0), rng.random_range(-4.0..4.0), rng.random_range(0.0..1.0)],
            extent: [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)],
            shape,
        }
    }

    /// Regression target: centroid followed by extent.
    pub fn targets(&self) -> [f64; 6] {
        let c = self.centroid;
        let e = self.extent;
        [c[0], c[1], c[2], e[0], e[1], e[2]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub scene: SceneParams,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn translated(&self, by: [f64; 3]) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]]).collect(),
            scene: SceneParams {
                centroid: [
                    self.scene.centroid[0] + by[0],
                    self.scene.centroid[1] + by[1],
                    self.scene.centroid[2] + by[2],
                ],
                ..self.scene
            },
        }
    }
}

/// Scene with randomly drawn centroid and extent.
pub fn generate_scene(shape: ShapeKind, seed: u64) -> PointCloud {
    let mut rng = rng_for(seed, 0xC0DE);
    let scene = SceneParams::random(shape, &mut rng);
    generate_scene_with(scene, seed)
}

/// Samples [`SCENE_POINTS`] surface points of the given scene.
pub fn generate_scene_with(scene: SceneParams, seed: u64) -> PointCloud {
    let mut rng = rng_for(seed, 0x5CE4E);
    let noise = Normal::new(0.0, SURFACE_NOISE).unwrap();
    let [cx, cy, cz] = scene.centroid;
    let [ex, ey, ez] = scene.extent;
    let mut points = Vec::with_capacity(SCENE_POINTS);
    for _ in 0..SCENE_POINTS {
        let p = match scene.shape {
            ShapeKind::Sphere => {
                let mut d: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-12);
                d.iter_mut().for_each(|v| *v /= n);
                [cx + ex * d[0], cy + ey * d[1], cz + ez * d[2]]
            }
            ShapeKind::Box => {
                // pick a face with probability proportional to its area
                let areas = [ey * ez, ex * ez, ex * ey];
                let total: f64 = areas.iter().sum();
                let r = rng.random_range(0.0..total);
                let axis = if r < areas[0] { 0 } else if r < areas[0] + areas[1] { 1 } else { 2 };
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut local = [
                    rng.random_range(-ex..ex),
                    rng.random_range(-ey..ey),
                    rng.random_range(-ez..ez),
                ];
                local[axis] = side * scene.extent[axis];
                [cx + local[0], cy + local[1], cz + local[2]]
            }
            ShapeKind::PlaneComposite => {
                // floor at the bottom of the box plus a wall at its far side
                let floor_area = ex * ey;
                let wall_area = ey * ez;
                if rng.random_range(0.0..floor_area + wall_area) < floor_area {
                    [cx + rng.random_range(-ex..ex), cy + rng.random_range(-ey..ey), cz - ez]
                } else {
                    [cx + ex, cy + rng.random_range(-ey..ey), cz + rng.random_range(-ez..ez)]
                }
            }
        };
        points.push([p[0] + rng.sample(noise), p[1] + rng.sample(noise), p[2] + rng.sample(noise)]);
    }
    PointCloud { points, scene }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sphere_stays_within_noise_band() {
        let scene = SceneParams { centroid: [0.0; 3], extent: [1.0; 3], shape: ShapeKind::Sphere };
        let pc = generate_scene_with(scene, 4);
        assert_eq!(pc.len(), SCENE_POINTS);
        for p in &pc.points {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!(r <= 1.0 + 5.0 * SURFACE_NOISE, "{r}");
        }
    }

    #[test]
    fn box_bounds_match_ground_truth() {
        let scene = SceneParams { centroid: [8.0, -1.0, 0.5], extent: [1.5, 0.7, 1.1], shape: ShapeKind::Box };
        let pc = generate_scene_with(scene, 9);
        let (lo, hi) = pc.bounds();
        for a in 0..3 {
            let tol = 5.0 * SURFACE_NOISE;
            assert!((lo[a] - (scene.centroid[a] - scene.extent[a])).abs() <= tol, "axis {a} min {}", lo[a]);
            assert!((hi[a] - (scene.centroid[a] + scene.extent[a])).abs() <= tol, "axis {a} max {}", hi[a]);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        for shape in ShapeKind::ALL {
            assert_eq!(generate_scene(shape, 3), generate_scene(shape, 3));
            assert_ne!(generate_scene(shape, 3), generate_scene(shape, 4));
        }
    }

    #[test]
    fn plane_composite_lies_on_floor_or_wall() {
        let pc = generate_scene(ShapeKind::PlaneComposite, 2);
        let s = pc.scene;
        for p in &pc.points {
            let on_floor = (p[2] - (s.centroid[2] - s.extent[2])).abs() < 5.0 * SURFACE_NOISE;
            let on_wall = (p[0] - (s.centroid[0] + s.extent[0])).abs() < 5.0 * SURFACE_NOISE;
            assert!(on_floor || on_wall);
        }
    }
}
