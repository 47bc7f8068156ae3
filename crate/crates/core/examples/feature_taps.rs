//! Fit the point-set extractor, read out all three taps and round-trip a
//! feature file.
use sensor_regret::lab::{
    generate_scene, read_feature_file, write_feature_file, ExtractorTraining, FeatureFile, PointSetExtractor, SampleMeta,
    ShapeKind, Tap,
};

fn main() {
    let scenes: Vec<_> = (0..96).map(|i| generate_scene(ShapeKind::ALL[i % 3], i as u64)).collect();
    let cfg = ExtractorTraining { scenes: 96, epochs: 10, ..Default::default() };
    let (ex, curve) = PointSetExtractor::fit(&scenes, &cfg).unwrap();
    println!("extractor loss {:.4} -> {:.4}", curve[0], curve[curve.len() - 1]);

    let pc = generate_scene(ShapeKind::Sphere, 1000);
    println!("truth  {:.2?}\npredict {:.2?}", pc.scene.targets(), ex.predict(&pc).unwrap());
    for tap in Tap::ALL {
        let v = ex.extract(&pc, tap).unwrap();
        println!("{tap:8} dim {} first {:.3?}", v.dim(), &v.values[..4]);
    }

    let vectors: Vec<_> = scenes[..4].iter().map(|s| ex.extract(s, Tap::Encoder).unwrap()).collect();
    let meta = (0..4)
        .map(|i| SampleMeta { sample_id: i, label: "clean".into(), scene_seed: i as u64, scene: scenes[i].scene, corruption: None })
        .collect();
    let dir = std::env::temp_dir().join("feature_taps_example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("encoder.lrft");
    write_feature_file(&path, &FeatureFile::from_vectors(&vectors, meta).unwrap()).unwrap();
    let back = read_feature_file(&path).unwrap();
    println!("wrote and read {} rows of dim {} at {}", back.rows.len(), back.dim, path.display());
}
