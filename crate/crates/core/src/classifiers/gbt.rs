//! Gradient-boosted regression trees on the logistic loss.
//!
//! The raw score is `F(x) = init + η Σ tree(x)`. Each stage fits a regression
//! tree to the residuals `y − p` and sets its leaves to the one-step Newton
//! value `Σ r / Σ p(1 − p)`. If the stage would raise the training log-loss,
//! its leaves are halved until it does not.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, Target};
use super::{check_binary, check_features, sigmoid, Classifier, TreeModel, TreeOptions};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtOptions {
    pub n_stages: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtOptions {
    fn default() -> Self {
        GbtOptions {
            n_stages: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub init: f64,
    pub learning_rate: f64,
    pub stages: Vec<TreeModel>,
    pub n_features: usize,
    /// Training log-loss before the first stage and after each stage.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    /// Raw additive score (log-odds) per row.
    pub fn decision_function(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(x, self.n_features)?;
        let mut f = vec![self.init; x.rows()];
        for t in &self.stages {
            for (fi, v) in f.iter_mut().zip(t.values(x)?) {
                *fi += self.learning_rate * v;
            }
        }
        Ok(f)
    }
}

impl Classifier for GbtModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.decision_function(x)?.into_iter().map(sigmoid).collect())
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.decision_function(x)?.into_iter().map(|f| usize::from(f >= 0.0)).collect())
    }
}

/// Mean logistic loss of raw scores `f` against labels `y`.
pub fn log_loss(y: &[usize], f: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(f)
        .map(|(&t, &z)| {
            let m = if t == 1 { -z } else { z };
            if m > 0.0 {
                m + (-m).exp().ln_1p()
            } else {
                m.exp().ln_1p()
            }
        })
        .sum();
    total / y.len().max(1) as f64
}

pub fn gbt_fit(x: &Matrix, y: &[usize], opts: &GbtOptions) -> Result<GbtModel> {
    check_binary(x, y)?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::invalid("cannot fit boosting on zero rows"));
    }
    let positives = y.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass("gradient boosting needs both classes"));
    }
    let base = positives as f64 / n as f64;
    let init = (base / (1.0 - base)).ln();
    let eta = opts.learning_rate;
    let tree_opts = TreeOptions {
        max_depth: opts.max_depth,
        min_samples_leaf: opts.min_samples_leaf,
        max_features: None,
    };
    let rows: Vec<usize> = (0..n).collect();
    let mut f = vec![init; n];
    let mut loss = log_loss(y, &f);
    let mut train_loss = vec![loss];
    let mut stages = Vec::with_capacity(opts.n_stages);

    for _ in 0..opts.n_stages {
        let p: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
        let residual: Vec<f64> = y.iter().zip(&p).map(|(&t, &pi)| t as f64 - pi).collect();
        let hessian: Vec<f64> = p.iter().map(|&pi| pi * (1.0 - pi)).collect();
        let mut tree = build_tree::<ChaCha8Rng>(
            x,
            Target::Newton {
                residual: &residual,
                hessian: &hessian,
            },
            &rows,
            &tree_opts,
            None,
        );
        let delta = tree.values(x)?;
        let mut scale = 1.0;
        let mut next_loss;
        loop {
            let trial: Vec<f64> = f.iter().zip(&delta).map(|(fi, d)| fi + eta * scale * d).collect();
            next_loss = log_loss(y, &trial);
            if next_loss <= loss || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        if next_loss > loss {
            scale = 0.0;
            next_loss = loss;
        }
        if scale != 1.0 {
            tree.scale_leaves(scale);
        }
        for (fi, d) in f.iter_mut().zip(&delta) {
            *fi += eta * scale * d;
        }
        loss = next_loss;
        train_loss.push(loss);
        stages.push(tree);
    }

    Ok(GbtModel {
        init,
        learning_rate: eta,
        stages,
        n_features: x.cols(),
        train_loss,
    })
}
