use sbic::data::{to_csv_string, write_csv};
use sbic::{
    cross_validate, generate_toy, load_csv, Classifier, LambdaGrid, LambdaMode, PipelineConfig, Toy,
};

fn quick() -> PipelineConfig {
    PipelineConfig {
        clusters: Some(20),
        members: 2,
        absent_count: Some(2),
        lambda: LambdaMode::Grid(LambdaGrid::new(vec![0.1, 0.3], vec![1.0, 5.0]).unwrap()),
        ..PipelineConfig::default()
    }
}

#[test]
fn csv_export_is_a_fixpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    let data = generate_toy(Toy::Two, 12);
    write_csv(&data, &path).unwrap();
    let back = load_csv(&path, "label").unwrap();
    assert_eq!(to_csv_string(&back), to_csv_string(&data));
    assert_eq!(back.checksum(), data.checksum());
}

#[test]
fn saved_classifier_predicts_identically() {
    let data = generate_toy(Toy::One, 6);
    let clf = Classifier::fit(&data, &quick(), 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    std::fs::write(&path, clf.to_text()).unwrap();
    let back = Classifier::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let a = clf.predict_all(data.inputs()).unwrap();
    let b = back.predict_all(data.inputs()).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn cross_validation_is_reproducible() {
    let data = generate_toy(Toy::Two, 3);
    let a = cross_validate(&data, 4, &quick(), 9).unwrap();
    let b = cross_validate(&data, 4, &quick(), 9).unwrap();
    assert_eq!(a.summary(), b.summary());
    assert_eq!(a.average_curve, b.average_curve);
    assert_eq!(a.folds.len(), 4);
    assert!(a.mean_auc > 0.8, "{}", a.summary());
}
