//! Minimize a shifted quadratic with each gradient-free method and print the
//! best-so-far objective; the SPSA trace is written as CSV to stdout.
use sensor_regret::zo::{optimize, ZoConfig, ZoMethod};

fn main() {
    let target = [1.0, -2.0, 0.5, 3.0];
    let mut f = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    for method in [ZoMethod::Spsa, ZoMethod::ZoSgd, ZoMethod::ZoSign] {
        let mut cfg = ZoConfig { method, iterations: 300, seed: 11, ..Default::default() };
        cfg.spsa.a = 0.5;
        cfg.zo.step = 0.05;
        let r = optimize(&mut f, &[0.0; 4], &cfg, None).unwrap();
        println!("{:8} f0 {:.3} -> best {:.5} after {} evaluations", method.name(), r.f_initial, r.f_best, r.evaluations);
    }
    let cfg = ZoConfig { iterations: 20, ..Default::default() };
    let r = optimize(&mut f, &[0.0; 4], &cfg, None).unwrap();
    r.write_trace_csv(std::io::stdout().lock()).unwrap();
}
