use ofsulr_core::classifiers::*;
use ofsulr_core::pipeline::generate_synthetic;
use ofsulr_core::{Classifier, ClassifierKind, ClassifierModel, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let centre = if c == 1 { 3.0 } else { -3.0 };
        rows.push(vec![centre + rng.random_range(-1.0..1.0), centre + rng.random_range(-1.0..1.0)]);
        y.push(c);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn accuracy(pred: &[usize], y: &[usize]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

#[test]
fn every_classifier_fits_separable_blobs() {
    let (x, y) = blobs(200, 4);
    for kind in ClassifierKind::ALL {
        let m = fit_baseline(kind, &x, &y, &BaselineOptions::default(), 1).unwrap();
        assert_eq!(m.kind(), kind);
        let pred = m.predict(&x).unwrap();
        assert_eq!(accuracy(&pred, &y), 1.0, "{kind}");
        assert_eq!(m.score(&x).unwrap().len(), 200);
    }
}

#[test]
fn predict_is_thresholded_score() {
    let (x, y) = blobs(60, 9);
    let thresholds = [
        (ClassifierKind::LogReg, 0.5),
        (ClassifierKind::Svm, 0.0),
        (ClassifierKind::GradientBoosting, 0.5),
    ];
    for (kind, t) in thresholds {
        let m = fit_baseline(kind, &x, &y, &BaselineOptions::default(), 0).unwrap();
        let expect: Vec<usize> = m.score(&x).unwrap().iter().map(|&s| usize::from(s >= t)).collect();
        assert_eq!(m.predict(&x).unwrap(), expect, "{kind}");
    }
}

/// Direct minimisation of the SVM primal over a grid of (w1, w2, b).
#[test]
fn svm_reaches_grid_minimum_of_primal() {
    let (x, y) = blobs(40, 2);
    let c = 10.0;
    let m = svm_fit(&x, &y, &SvmOptions { c, epochs: 400, seed: 3 }).unwrap();
    let fitted = svm_objective(&x, &y, &m.weights, m.bias, c);

    let mut best = f64::INFINITY;
    let steps = 60;
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=20 {
                let w = [i as f64 / steps as f64 * 1.5, j as f64 / steps as f64 * 1.5];
                let b = -0.5 + k as f64 / 20.0;
                best = best.min(svm_objective(&x, &y, &w, b, c));
            }
        }
    }
    assert!(fitted <= best * 1.05 + 1e-3, "fitted {fitted} vs grid {best}");
    assert_eq!(accuracy(&m.predict(&x).unwrap(), &y), 1.0);
}

#[test]
fn l2_shrinkage_is_monotone_in_c() {
    let (table, truth) = generate_synthetic(150, 3, 2, 2.0, 6).unwrap();
    let cols: Vec<Vec<f64>> = (0..table.row_count())
        .map(|i| table.columns().iter().map(|c| c.cells[i].as_ref().unwrap().as_f64().unwrap()).collect())
        .collect();
    let x = Matrix::from_rows(&cols).unwrap();
    for solver in [Solver::Gd, Solver::Newton] {
        let norm = |c: f64| {
            let opts = LogRegOptions { penalty: Penalty::L2, c, solver, ..LogRegOptions::default() };
            let m = logreg_fit(&x, &truth, &opts).unwrap();
            m.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
        };
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0, 100.0].into_iter().map(norm).collect();
        for pair in norms.windows(2) {
            assert!(pair[0] <= pair[1] + 1e-9, "{solver}: {norms:?}");
        }
    }
}

#[test]
fn forest_and_gbt_are_seed_deterministic() {
    let (x, y) = blobs(80, 12);
    let opts = BaselineOptions::default();
    for kind in [ClassifierKind::RandomForest, ClassifierKind::GradientBoosting, ClassifierKind::Svm] {
        let a = fit_baseline(kind, &x, &y, &opts, 42).unwrap();
        let b = fit_baseline(kind, &x, &y, &opts, 42).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn models_serialise_polymorphically() {
    let (x, y) = blobs(50, 1);
    for kind in ClassifierKind::ALL {
        let m = fit_baseline(kind, &x, &y, &BaselineOptions::default(), 0).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: ClassifierModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.kind(), kind);
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        assert_eq!(back.score(&x).unwrap(), m.score(&x).unwrap());
    }
}

#[test]
fn feature_count_mismatch_is_an_error() {
    let (x, y) = blobs(30, 5);
    let narrow = Matrix::from_rows(&[vec![1.0]]).unwrap();
    for kind in ClassifierKind::ALL {
        let m = fit_baseline(kind, &x, &y, &BaselineOptions::default(), 0).unwrap();
        assert!(m.predict(&narrow).is_err(), "{kind}");
    }
}
