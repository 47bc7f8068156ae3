//! ROC/AUC on synthetic scores and a full experiment report written to a
//! temporary directory.
use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use sensor_regret::eval::{auc_both_orientations, rank_auc, roc_auc, ExperimentReport};
use sensor_regret::regret::{LrScore, ScoreRecord};
use sensor_regret::rng::rng_for;

fn main() {
    let mut rng = rng_for(1, 0);
    let mut draw = |mean: f64, n: usize| -> Vec<f64> { (0..n).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect() };
    let clean = draw(0.0, 200);
    let out = draw(1.0, 200);
    let roc = roc_auc(&clean, &out).unwrap();
    println!("auc {:.4} (rank form {:.4}), {} curve points", roc.auc, rank_auc(&clean, &out).unwrap(), roc.points.len());
    println!("both orientations {:?}", auc_both_orientations(&clean, &out).unwrap());

    let records: Vec<ScoreRecord> = clean
        .iter()
        .map(|&v| ("clean", v))
        .chain(out.iter().map(|&v| ("shifted", v)))
        .enumerate()
        .map(|(i, (label, v))| ScoreRecord { sample_id: i.to_string(), score: LrScore::new(-v.abs(), -v.abs() + v.max(0.0)), label: label.into() })
        .collect();
    let report = ExperimentReport::from_records(records, BTreeMap::new()).unwrap();
    let dir = std::env::temp_dir().join("roc_report_example");
    report.write(&dir).unwrap();
    print!("{}", report.auc_table_csv());
    println!("report in {}", dir.display());
}
