use std::fs;

use vprsel::classifier::load_model;
use vprsel::descriptor::FeatureTransform;
use vprsel::evaluation::EvaluationReport;
use vprsel::labeling::MultiHotLabelSet;
use vprsel::pipeline::{Overrides, Pipeline, RunOptions, Stage, Strategy};
use vprsel::synthetic::{generate, SynthSpec};
use vprsel::Error;

#[test]
fn holdout_dataset_with_pca_search_and_unpruned_eval() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = SynthSpec::alternating(100, 50, 24, 2, 10, vec![vec![0], vec![1]], 0.02, 1);
    a.dataset = "alpha".into();
    let mut b = SynthSpec::alternating(40, 20, 24, 2, 10, vec![vec![0], vec![1]], 0.02, 2);
    b.dataset = "beta".into();
    generate(&a).unwrap().write_to(dir.path().join("alpha")).unwrap();
    generate(&b).unwrap().write_to(dir.path().join("beta")).unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{
            "datasets": ["alpha/manifest.json", {"manifest": "beta/manifest.json", "holdout": true}],
            "pca_k": 8,
            "pca_mode": "fit",
            "search": {"budget": 2},
            "evaluate_unpruned": true,
            "seed": 3
        }"#,
    )
    .unwrap();
    let p = Pipeline::from_file(&config, &Overrides::default()).unwrap();
    p.run(Stage::All, &RunOptions::default()).unwrap();
    let out = dir.path().join("out");

    let test = MultiHotLabelSet::read_csv(out.join("splits/test.csv")).unwrap();
    assert_eq!(test.tags(), vec!["alpha".to_string(), "beta".to_string()]);
    assert_eq!(test.filter_tag("beta").len(), 40);
    let train = MultiHotLabelSet::read_csv(out.join("splits/train.csv")).unwrap();
    assert_eq!(train.tags(), vec!["alpha".to_string()]);

    let transform = FeatureTransform::from_json(&fs::read_to_string(out.join("model/transform.json")).unwrap()).unwrap();
    assert!(matches!(transform, FeatureTransform::Pca(ref pca) if pca.k() == 8 && pca.dims() == 24));
    let (model, techniques) = load_model(out.join("model/model.json")).unwrap();
    assert_eq!(model.config().input_dim, 8);
    assert_eq!(techniques, vec!["cand0".to_string(), "cand1".to_string()]);
    let trials: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model/search.json")).unwrap()).unwrap();
    assert_eq!(trials.as_array().unwrap().len(), 2);

    let report: EvaluationReport =
        serde_json::from_str(&fs::read_to_string(out.join("reports/selector.json")).unwrap()).unwrap();
    assert_eq!(report.per_dataset_recall.len(), 2);
    assert!(report.oracle_recall >= report.recall_at_1);
    assert!(report.baseline_recalls.values().all(|&r| r <= report.oracle_recall));
    let unpruned = report.unpruned.clone().expect("unpruned summary requested");
    assert!(unpruned.queries >= test.len());
    assert!(unpruned.oracle_recall <= 1.0);
    for (_, counts) in vprsel::evaluation::selection_distribution(&report) {
        assert!((counts.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    // Unseen holdout tag falls back to the best-average choice.
    p.run(Stage::Eval, &RunOptions { strategy: Strategy::DatasetSpecific, emit_svg: false }).unwrap();
}

#[test]
fn pca_k_override_and_missing_descriptors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::alternating(60, 30, 12, 2, 10, vec![vec![0], vec![1]], 0.02, 4);
    generate(&spec).unwrap().write_to(dir.path().join("d")).unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"datasets": ["d/manifest.json"], "pca_mode": "fit"}"#).unwrap();
    let over = Overrides { pca_k: Some(4), ..Overrides::default() };
    Pipeline::from_file(&config, &over).unwrap().run(Stage::All, &RunOptions::default()).unwrap();
    let (model, _) = load_model(dir.path().join("out/model/model.json")).unwrap();
    assert_eq!(model.config().input_dim, 4);

    // k larger than the descriptor width cannot be fitted.
    let over = Overrides { pca_k: Some(64), ..Overrides::default() };
    let err = Pipeline::from_file(&config, &over).unwrap().run(Stage::Train, &RunOptions::default());
    assert!(matches!(err, Err(Error::Validation(_))), "{err:?}");

    fs::remove_file(dir.path().join("d/cand1_query.vprd")).unwrap();
    let err = Pipeline::from_file(&config, &Overrides::default()).err().unwrap();
    assert_eq!(err.exit_code(), 2);
}
