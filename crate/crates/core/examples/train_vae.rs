//! Train a small VAE on a correlated 2-D Gaussian, then compare ELBOs of
//! in-distribution and shifted points.
use rand::Rng;
use rand_distr::StandardNormal;
use sensor_regret::rng::rng_for;
use sensor_regret::vae::{checkpoint_bytes, elbo, train, TrainConfig, VaeParams};

fn main() {
    let mut rng = rng_for(7, 0);
    let data: Vec<Vec<f64>> = (0..512)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            vec![z, 0.8 * z + 0.2 * e]
        })
        .collect();
    let init = VaeParams::init(2, 1, &[16], 1).unwrap();
    let cfg = TrainConfig { epochs: 80, learning_rate: 5e-3, ..Default::default() };
    let out = train(&init, &data, &cfg).unwrap();
    for (epoch, loss) in out.loss_curve.iter().enumerate().step_by(10) {
        println!("epoch {epoch:3}  neg elbo {loss:.4}");
    }
    let near = elbo(&out.params, &[0.5, 0.4], 64, 3).unwrap().elbo;
    let far = elbo(&out.params, &[0.5, -2.0], 64, 3).unwrap().elbo;
    println!("elbo on-manifold {near:.3}, off-manifold {far:.3}");
    println!("checkpoint: {} bytes, {} parameters", checkpoint_bytes(&out.params).len(), out.params.param_count());
}
