//! Camera occupancy histogram and concat fusion with lidar features.
use sensor_regret::lab::camera::{occupancy_histogram, GRID};
use sensor_regret::lab::{corrupt, fuse, generate_scene, second_modality, CorruptionKind, CorruptionSpec, FeatureVector, Modality, Severity, ShapeKind, Tap};

fn print_grid(h: &[f64]) {
    for ix in 0..GRID {
        let row: Vec<String> = (0..GRID).map(|iy| format!("{:5.2}", h[ix * GRID + iy])).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() {
    let pc = generate_scene(ShapeKind::PlaneComposite, 4);
    println!("clean occupancy");
    print_grid(&occupancy_histogram(&pc));
    let snowy = corrupt(&pc, &CorruptionSpec::new(CorruptionKind::Snow, Severity::Heavy, 1)).unwrap();
    println!("heavy snow occupancy");
    print_grid(&occupancy_histogram(&snowy));

    let camera = second_modality(&snowy, 2);
    let lidar = FeatureVector::new(vec![0.0; 32], Tap::Encoder, Modality::Lidar);
    let fused = fuse(&lidar, &camera).unwrap();
    println!("fused dim {} ({} lidar + {} camera)", fused.dim(), lidar.dim(), camera.dim());
}
