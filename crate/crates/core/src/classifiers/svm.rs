//! Linear SVM trained by stochastic subgradient descent (Pegasos) on
//!
//! ```text
//! (λ/2)(‖w‖² + b²) + (1/n) Σ max(0, 1 − yᵢ(w·xᵢ + b)),   λ = 1/(C n)
//! ```
//!
//! with labels mapped to ±1. The bias is treated as the weight of a constant
//! feature and therefore shares the regulariser. Iterates from the second
//! half of training are averaged to form the final model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_binary, check_features, Classifier};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmOptions {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            c: 1.0,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub epochs: usize,
    /// Whether the objective stayed within 1% over the final tenth of epochs.
    pub stable: bool,
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl LinearSvmModel {
    pub fn decision_function(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(x, self.weights.len())?;
        Ok(x.row_iter().map(|r| dot(r, &self.weights) + self.bias).collect())
    }
}

impl Classifier for LinearSvmModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.decision_function(x)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.decision_function(x)?.into_iter().map(|s| usize::from(s >= 0.0)).collect())
    }
}

/// Primal objective of the model above at `(w, b)`.
pub fn svm_objective(x: &Matrix, y: &[usize], w: &[f64], b: f64, c: f64) -> f64 {
    let n = x.rows() as f64;
    let lambda = 1.0 / (c * n);
    let hinge: f64 = x
        .row_iter()
        .zip(y)
        .map(|(r, &t)| {
            let s = if t == 1 { 1.0 } else { -1.0 };
            (1.0 - s * (dot(r, w) + b)).max(0.0)
        })
        .sum();
    0.5 * lambda * (dot(w, w) + b * b) + hinge / n
}

pub fn svm_fit(x: &Matrix, y: &[usize], opts: &SvmOptions) -> Result<LinearSvmModel> {
    check_binary(x, y)?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::invalid("cannot fit on zero rows"));
    }
    if !(opts.c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {}", opts.c)));
    }
    let epochs = opts.epochs.max(1);
    let d = x.cols();
    let lambda = 1.0 / (opts.c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let average_from = epochs / 2;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; d];
    let mut avg_b = 0.0;
    let mut averaged = 0usize;
    let mut t = 0usize;
    let mut trace = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let s = if y[i] == 1 { 1.0 } else { -1.0 };
            let row = x.row(i);
            let margin = s * (dot(row, &w) + b);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                for (v, xi) in w.iter_mut().zip(row) {
                    *v += eta * s * xi;
                }
                b += eta * s;
            }
            let norm = (dot(&w, &w) + b * b).sqrt();
            if norm > radius {
                let f = radius / norm;
                w.iter_mut().for_each(|v| *v *= f);
                b *= f;
            }
            if epoch >= average_from {
                averaged += 1;
                let k = averaged as f64;
                for (a, v) in avg_w.iter_mut().zip(&w) {
                    *a += (v - *a) / k;
                }
                avg_b += (b - avg_b) / k;
            }
        }
        let obj = if averaged > 0 {
            svm_objective(x, y, &avg_w, avg_b, opts.c)
        } else {
            svm_objective(x, y, &w, b, opts.c)
        };
        trace.push(obj);
    }

    let tail = (epochs / 10).max(1);
    let last = &trace[trace.len() - tail..];
    let hi = last.iter().cloned().fold(f64::MIN, f64::max);
    let lo = last.iter().cloned().fold(f64::MAX, f64::min);
    let stable = hi - lo <= 0.01 * lo.abs().max(1e-12);

    Ok(LinearSvmModel {
        weights: avg_w,
        bias: avg_b,
        c: opts.c,
        epochs,
        stable,
        objective_trace: trace,
    })
}
