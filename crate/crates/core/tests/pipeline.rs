use std::fs;
use std::sync::Mutex;
use std::time::Duration;

use ofsulr_core::metrics::confusion;
use ofsulr_core::modelselect::{grid_search_observed, kfold_indices, CvOptions, FitStage, FoldTransform};
use ofsulr_core::pipeline::{generate_synthetic, prepare, run_ofsulr, RunOutput};
use ofsulr_core::preprocess::{encode, EncodingPolicy};
use ofsulr_core::stream::{stream_evaluate, StreamSource};
use ofsulr_core::{Classifier, Error, ModelBundle, ParamGrid, PipelineConfig, ScalerKind, Selection};

fn config() -> PipelineConfig {
    let mut c = PipelineConfig::from_toml("seed = 21\n[grid]\nC = [0.1, 1.0, 10.0]\n").unwrap();
    c.output.dir = "unused".into();
    c
}

fn run(n: usize, seed: u64) -> RunOutput {
    let (table, _) = generate_synthetic(n, 4, 2, 9.0, seed).unwrap();
    run_ofsulr(&config(), &table).unwrap()
}

#[test]
fn per_fold_transforms_never_see_validation_rows() {
    let (table, truth) = generate_synthetic(90, 4, 2, 3.0, 2).unwrap();
    let x = encode(&table, EncodingPolicy::Label).unwrap();
    let opts = CvOptions {
        seed: 8,
        transform: FoldTransform {
            scaler: Some(ScalerKind::ZScore),
            pca: Some(Selection::Fixed(2)),
        },
        ..CvOptions::default()
    };
    let seen: Mutex<Vec<(Option<usize>, FitStage, Vec<usize>)>> = Mutex::new(Vec::new());
    let gs = grid_search_observed(&x, &truth, &ParamGrid::default(), &opts, &|e| {
        seen.lock().unwrap().push((e.fold, e.stage, e.rows.to_vec()));
    })
    .unwrap();
    let folds = kfold_indices(90, opts.folds, opts.seed).unwrap();
    let seen = seen.into_inner().unwrap();
    assert_eq!(seen.len(), 2 * (folds.len() + 1));
    for (fold, _, rows) in &seen {
        match fold {
            Some(f) => {
                let (train, val) = &folds[*f];
                assert_eq!(rows, train);
                assert!(rows.iter().all(|r| !val.contains(r)));
            }
            None => assert_eq!(rows, &(0..90).collect::<Vec<_>>()),
        }
    }
    assert!(gs.transform.scaler.is_some() && gs.transform.pca.is_some());
}

#[test]
fn train_only_labelling_fits_statistics_on_train_rows() {
    let (table, truth) = generate_synthetic(150, 3, 2, 9.0, 4).unwrap();
    let mut c = config();
    c.cluster.label_train_only = true;
    let p = prepare(&c, &table).unwrap();
    assert_eq!(p.cluster_rows, p.split.train);

    // scaler means recomputed from the training rows alone
    for j in 0..3 {
        let col = &table.columns()[j].cells;
        let mean = p.split.train.iter().map(|&i| col[i].as_ref().unwrap().as_f64().unwrap()).sum::<f64>() / p.split.train.len() as f64;
        assert!((p.scaler.offset[j] - mean).abs() < 1e-9);
    }
    let agree = p.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
    assert!(agree == 150 || agree == 0, "{agree}");
}

#[test]
fn bundle_round_trip_preserves_predictions() {
    let out = run(200, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.model");
    out.bundle.save(&path).unwrap();
    let back = ModelBundle::load(&path).unwrap();
    let (pred, scores) = back.predict_table(&out.test_table).unwrap();
    assert_eq!(pred, out.predictions);
    let direct = out.bundle.classifier.score(&out.prepared.x_test.values).unwrap();
    assert_eq!(scores, direct);
}

#[test]
fn damaged_bundles_give_structured_errors() {
    let out = run(120, 5);
    let text = serde_json::to_string_pretty(&out.bundle).unwrap();
    let truncated = &text[..text.len() / 2];
    assert!(matches!(ModelBundle::from_json(truncated), Err(Error::CorruptBundle(_))));
    let other = text.replace("ofsulr-bundle/1", "ofsulr-bundle/99");
    assert!(matches!(ModelBundle::from_json(&other), Err(Error::BundleVersion { .. })));
    assert!(matches!(ModelBundle::from_json("{}"), Err(Error::CorruptBundle(_))));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cut.model");
    fs::write(&p, truncated).unwrap();
    assert!(matches!(ModelBundle::load(&p), Err(Error::CorruptBundle(_))));
}

#[test]
fn failed_write_removes_partial_outputs() {
    let out = run(100, 6);
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("cv.csv")).unwrap();
    assert!(out.write(dir.path()).is_err());
    assert!(!dir.path().join("bundle.model").exists());
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn reports_are_identical_apart_from_timing() {
    let a = run(160, 7);
    let b = run(160, 7);
    let strip = |o: &RunOutput| {
        let mut v = serde_json::to_value(&o.report).unwrap();
        v["timings"] = serde_json::Value::Null;
        v["eval"]["wall_time"] = serde_json::Value::Null;
        v["provenance"]["created_at"] = serde_json::Value::Null;
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.cv.to_csv(), b.cv.to_csv());
}

#[test]
fn streaming_a_written_test_file_matches_batch() {
    let out = run(300, 8);
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    let bundle = ModelBundle::load(dir.path().join("bundle.model")).unwrap();
    let src = StreamSource::open(dir.path().join("test.csv"), 13, Duration::ZERO, bundle.load_options()).unwrap();
    let mut seen = Vec::new();
    let report = stream_evaluate(&bundle, src, 2, |b| seen.push(b.batch_id)).unwrap();
    assert_eq!(seen, (0..seen.len() as u64).collect::<Vec<_>>());
    assert_eq!(report.total_rows, out.prepared.y_test.len());
    assert_eq!(report.cumulative.confusion, confusion(&out.prepared.y_test, &out.predictions).unwrap());
}

#[test]
fn pca_first_order_also_runs() {
    let (table, truth) = generate_synthetic(200, 4, 2, 9.0, 10).unwrap();
    let mut c = config();
    c.order = "pca-then-label".parse().unwrap();
    c.cluster.k = Some(2);
    let out = run_ofsulr(&c, &table).unwrap();
    assert!(out.report.elbow.is_none());
    let agree = out.prepared.labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
    assert!(agree == 200 || agree == 0, "{agree}");
    assert!(out.report.label_features.iter().all(|f| f.starts_with("PC")));
}
