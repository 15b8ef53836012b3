use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, Target};
use super::{check_binary, check_features, Classifier, TreeModel, TreeOptions};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestOptions {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            n_trees: 50,
            max_depth: 12,
            min_samples_leaf: 1,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub seed: u64,
    pub max_features: usize,
    pub n_features: usize,
}

impl ForestModel {
    /// Fraction of trees voting for class 1.
    pub fn vote_fraction(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(x, self.n_features)?;
        let mut votes = vec![0.0; x.rows()];
        for t in &self.trees {
            for (v, p) in votes.iter_mut().zip(t.predict(x)?) {
                *v += p as f64;
            }
        }
        let k = self.trees.len().max(1) as f64;
        votes.iter_mut().for_each(|v| *v /= k);
        Ok(votes)
    }
}

impl Classifier for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.vote_fraction(x)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.vote_fraction(x)?.into_iter().map(|v| usize::from(v > 0.5)).collect())
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn draw_bootstrap(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// The bootstrap rows drawn for tree `tree` of a forest seeded with `seed`.
pub fn bootstrap_indices(n: usize, seed: u64, tree: usize) -> Vec<usize> {
    draw_bootstrap(&mut tree_rng(seed, tree), n)
}

pub fn forest_fit(x: &Matrix, y: &[usize], opts: &ForestOptions) -> Result<ForestModel> {
    check_binary(x, y)?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::invalid("cannot fit a forest on zero rows"));
    }
    if opts.n_trees == 0 {
        return Err(Error::invalid("a forest needs at least one tree"));
    }
    let d = x.cols();
    let max_features = opts
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let tree_opts = TreeOptions {
        max_depth: opts.max_depth,
        min_samples_leaf: opts.min_samples_leaf,
        max_features: Some(max_features),
    };
    let trees = (0..opts.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(opts.seed, i);
            let rows = draw_bootstrap(&mut rng, n);
            build_tree(x, Target::Class(y), &rows, &tree_opts, Some(&mut rng))
        })
        .collect();
    Ok(ForestModel {
        trees,
        seed: opts.seed,
        max_features,
        n_features: d,
    })
}
