//! The in-memory benchmark behind the `bench` command, at reduced scale:
//! LR vs plain likelihood AUC for every corruption group.
use sensor_regret::pipeline::{run_bench, LabConfig};

fn main() {
    let mut cfg = LabConfig { n_train: 400, n_test: 40, ..Default::default() };
    cfg.extractor.scenes = 192;
    cfg.extractor.epochs = 20;
    cfg.vae.epochs = 80;
    cfg.scoring.iterations = 50;
    if let Some(seed) = std::env::args().nth(1) {
        cfg.seed = seed.parse().expect("seed must be an integer");
    }
    let out = run_bench(&cfg).unwrap();
    println!("{:24} {:>8} {:>10}", "label", "auc_lr", "auc_lik");
    for row in &out.report.rows {
        println!("{:24} {:8.3} {:10.3}", row.label, row.auc_lr, row.auc_likelihood_best);
    }
}
