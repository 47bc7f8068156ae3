//! Q-format quantization and an SPSA run carried out entirely on the
//! fixed-point grid.
use sensor_regret::zo::{optimize, FixedPointFormat, ZoConfig};

fn main() {
    let q: FixedPointFormat = "Q16.16".parse().unwrap();
    println!("resolution {:e}, range [{}, {}]", q.resolution(), q.min_value(), q.max_value());
    for x in [0.1, -1.0 / 3.0, 1e6, 2.5 * q.resolution()] {
        println!("{x:>12} -> raw {:>12} -> {}", q.quantize(x), q.round_trip(x));
    }
    let mut f = |x: &[f64]| x.iter().map(|v| (v - 0.25) * (v - 0.25)).sum::<f64>();
    let mut cfg = ZoConfig { iterations: 200, seed: 5, ..Default::default() };
    cfg.spsa.a = 0.3;
    for fixed in [None, Some(q), Some(FixedPointFormat::new(16, 8).unwrap())] {
        let r = optimize(&mut f, &[1.0, -1.0, 0.0], &cfg, fixed).unwrap();
        let name = fixed.map(|q| format!("Q{}.{}", q.total_bits() - q.frac_bits(), q.frac_bits()));
        println!("{:8} best {:.3e} at {:?}", name.as_deref().unwrap_or("float"), r.f_best, r.theta_best);
    }
}
