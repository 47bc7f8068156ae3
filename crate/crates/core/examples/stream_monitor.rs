//! End-to-end filtering experiment at reduced scale: calibrate an LR threshold
//! on clean data, gate a half-corrupted stream and compare downstream R².
use sensor_regret::pipeline::{run_monitor_experiment, LabConfig};

fn main() {
    let mut cfg = LabConfig { n_train: 400, n_calib: 100, n_stream: 120, ..Default::default() };
    cfg.extractor.scenes = 192;
    cfg.extractor.epochs = 20;
    cfg.vae.epochs = 80;
    let out = run_monitor_experiment(&cfg).unwrap();
    let s = &out.summary;
    println!("threshold {:.4}, trusted {}/{}", s.threshold, s.trusted, s.samples);
    println!("R² clean {:.4}, without gate {:?}, with gate {:?}", out.r2_clean, s.r2_without, s.r2_with);
    for (d, m) in out.decisions.iter().zip(&out.stream_meta).take(8) {
        println!("{:>4} {:20} lr {:8.4} {:?}", d.sample_id, m.label, d.lr, d.verdict);
    }
}
