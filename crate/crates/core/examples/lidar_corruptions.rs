//! Generate a scene and apply every corruption at both severities.
use sensor_regret::lab::{corrupt, generate_scene, CorruptionKind, CorruptionSpec, Severity, ShapeKind};

fn main() {
    let pc = generate_scene(ShapeKind::Box, 42);
    let (lo, hi) = pc.bounds();
    println!("clean: {} points, bounds {lo:.2?} .. {hi:.2?}, targets {:.2?}", pc.len(), pc.scene.targets());
    for kind in CorruptionKind::ALL {
        for severity in Severity::ALL {
            let spec = CorruptionSpec::new(kind, severity, 9);
            match corrupt(&pc, &spec) {
                Ok(c) => {
                    let (lo, hi) = c.bounds();
                    println!("{:24} {:4} points  x {:6.2}..{:6.2}  z {:6.2}..{:6.2}", spec.label(), c.len(), lo[0], hi[0], lo[2], hi[2]);
                }
                Err(e) => println!("{:24} {e}", spec.label()),
            }
        }
    }
}
