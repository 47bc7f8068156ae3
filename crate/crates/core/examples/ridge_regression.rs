//! Downstream regressor: scene parameters from encoder features, scored by R²
//! on clean and on heavily fogged scenes.
use sensor_regret::lab::{corrupt, generate_scene, r2, CorruptionKind, CorruptionSpec, ExtractorTraining, PointSetExtractor, RidgeRegressor, Severity, ShapeKind, Tap};

fn main() {
    let scenes: Vec<_> = (0..300).map(|i| generate_scene(ShapeKind::ALL[i % 3], i as u64)).collect();
    let cfg = ExtractorTraining { scenes: 300, epochs: 15, ..Default::default() };
    let (ex, _) = PointSetExtractor::fit(&scenes[..200], &cfg).unwrap();
    let feats = |pcs: &[_]| -> Vec<Vec<f64>> { pcs.iter().map(|p| ex.extract(p, Tap::Encoder).unwrap().values).collect() };
    let targets: Vec<[f64; 6]> = scenes.iter().map(|s| s.scene.targets()).collect();

    let ridge = RidgeRegressor::fit(&feats(&scenes[..200]), &targets[..200], 1e-3).unwrap();
    let predict = |xs: Vec<Vec<f64>>| -> Vec<Vec<f64>> { xs.iter().map(|x| ridge.predict(x).unwrap()).collect() };
    println!("train R² {:.4}", r2(&predict(feats(&scenes[..200])), &targets[..200]).unwrap());
    println!("clean test R² {:.4}", r2(&predict(feats(&scenes[200..])), &targets[200..]).unwrap());
    let fogged: Vec<_> = scenes[200..]
        .iter()
        .enumerate()
        .map(|(i, s)| corrupt(s, &CorruptionSpec::new(CorruptionKind::Fog, Severity::Heavy, i as u64)).unwrap())
        .collect();
    println!("fogged test R² {:.4}", r2(&predict(feats(&fogged)), &targets[200..]).unwrap());
}
