//! CART trees: Gini splits for classification and squared-error splits with
//! Newton leaves for the boosting stages.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_binary, check_features, Classifier};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeOptions {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features drawn per split; `None` uses every feature.
    pub max_features: Option<usize>,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            max_depth: 12,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

/// Arena node. Children are indices into [`TreeModel::nodes`]; rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// For classification trees `value` is the class-1 fraction of the
    /// training rows that reached the leaf.
    Leaf { value: f64, samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl TreeModel {
    fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Raw leaf outputs for every row.
    pub fn values(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_features(x, self.n_features)?;
        Ok(x.row_iter().map(|r| self.leaf_value(r)).collect())
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value, .. } = n {
                *value *= factor;
            }
        }
    }
}

impl Classifier for TreeModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.values(x)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.values(x)?.into_iter().map(|p| usize::from(p > 0.5)).collect())
    }
}

pub(crate) enum Target<'a> {
    Class(&'a [usize]),
    /// Residuals and Hessian weights of a boosting stage.
    Newton { residual: &'a [f64], hessian: &'a [f64] },
}

impl Target<'_> {
    fn value(&self, i: usize) -> f64 {
        match self {
            Target::Class(y) => y[i] as f64,
            Target::Newton { residual, .. } => residual[i],
        }
    }

    fn leaf(&self, rows: &[usize]) -> f64 {
        match self {
            Target::Class(y) => rows.iter().filter(|&&i| y[i] == 1).count() as f64 / rows.len() as f64,
            Target::Newton { residual, hessian } => {
                let num: f64 = rows.iter().map(|&i| residual[i]).sum();
                let den: f64 = rows.iter().map(|&i| hessian[i]).sum();
                if den.abs() < 1e-150 {
                    0.0
                } else {
                    num / den
                }
            }
        }
    }

    /// Impurity of a node from its count, sum and sum of squares.
    fn impurity(&self, n: f64, sum: f64, sq: f64) -> f64 {
        match self {
            Target::Class(_) => {
                let p = sum / n;
                2.0 * p * (1.0 - p)
            }
            Target::Newton { .. } => (sq / n - (sum / n) * (sum / n)).max(0.0),
        }
    }

    fn allows_zero_gain(&self) -> bool {
        matches!(self, Target::Class(_))
    }
}

struct Builder<'a, R> {
    x: &'a Matrix,
    target: Target<'a>,
    opts: &'a TreeOptions,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn candidates(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        match (self.opts.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = sample(rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len() as f64;
        let (sum, sq) = rows.iter().fold((0.0, 0.0), |(s, q), &i| {
            let v = self.target.value(i);
            (s + v, q + v * v)
        });
        let parent = self.target.impurity(n, sum, sq);
        let min_leaf = self.opts.min_samples_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order = rows.to_vec();
        for f in self.candidates() {
            order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]));
            let (mut ls, mut lq) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let v = self.target.value(order[k]);
                ls += v;
                lq += v * v;
                let lo = self.x[(order[k], f)];
                let hi = self.x[(order[k + 1], f)];
                let nl = k + 1;
                let nr = order.len() - nl;
                if lo == hi || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (nl, nr) = (nl as f64, nr as f64);
                let child = (nl / n) * self.target.impurity(nl, ls, lq)
                    + (nr / n) * self.target.impurity(nr, sum - ls, sq - lq);
                let gain = parent - child;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        let zero_ok = self.target.allows_zero_gain();
        best.filter(|b| b.gain > 1e-12 || (zero_ok && b.gain > -1e-12))
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.target.value(rows[0]);
        rows.iter().all(|&i| self.target.value(i) == first)
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.target.leaf(rows),
            samples: rows.len(),
        });
        if depth >= self.opts.max_depth
            || rows.len() < 2 * self.opts.min_samples_leaf.max(1)
            || self.is_pure(rows)
        {
            return id;
        }
        let Some(split) = self.best_split(rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[(i, split.feature)] <= split.threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

pub(crate) fn build_tree<R: Rng>(
    x: &Matrix,
    target: Target<'_>,
    rows: &[usize],
    opts: &TreeOptions,
    rng: Option<&mut R>,
) -> TreeModel {
    let mut b = Builder {
        x,
        target,
        opts,
        rng,
        nodes: Vec::new(),
    };
    b.build(rows, 0);
    TreeModel {
        nodes: b.nodes,
        n_features: x.cols(),
        max_depth: opts.max_depth,
        min_samples_leaf: opts.min_samples_leaf,
    }
}

pub fn tree_fit(x: &Matrix, y: &[usize], opts: &TreeOptions) -> Result<TreeModel> {
    check_binary(x, y)?;
    if x.rows() == 0 {
        return Err(Error::invalid("cannot fit a tree on zero rows"));
    }
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(build_tree(x, Target::Class(y), &rows, opts, Some(&mut rng)))
}
