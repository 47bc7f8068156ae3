//! Likelihood regret of in-distribution vs shifted inputs, with SPSA and with
//! exact-gradient ascent on the encoder.
use rand::Rng;
use rand_distr::StandardNormal;
use sensor_regret::regret::{score_likelihood, score_lr, score_lr_gradient, ScoreSettings};
use sensor_regret::rng::rng_for;
use sensor_regret::vae::{train, TrainConfig, VaeParams};

fn sample(rng: &mut impl Rng, shift: f64) -> Vec<f64> {
    let z: f64 = rng.sample(StandardNormal);
    (0..6).map(|i| z * (i as f64 * 0.3).cos() + 0.1 * rng.sample::<f64, _>(StandardNormal) + shift * (i % 2) as f64).collect()
}

fn main() {
    let mut rng = rng_for(3, 0);
    let data: Vec<Vec<f64>> = (0..400).map(|_| sample(&mut rng, 0.0)).collect();
    let cfg = TrainConfig { epochs: 60, learning_rate: 3e-3, ..Default::default() };
    let vae = train(&VaeParams::init(6, 2, &[16], 2).unwrap(), &data, &cfg).unwrap().params;

    let mut settings = ScoreSettings::default();
    settings.zo.spsa.a = 1e-3;
    settings.zo.spsa.c = 1e-2;
    for (name, shift) in [("in", 0.0), ("shifted", 1.5)] {
        for i in 0..3 {
            let x = sample(&mut rng, shift);
            let lik = score_likelihood(&vae, &x, 8, i).unwrap();
            let spsa = score_lr(&vae, &x, &settings, i).unwrap();
            let grad = score_lr_gradient(&vae, &x, 100, 1e-4, 8, i).unwrap();
            println!("{name:8} elbo {lik:8.3}  lr(spsa) {:.4}  lr(grad) {:.4}", spsa.lr, grad.lr);
        }
    }
}
