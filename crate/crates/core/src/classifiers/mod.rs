//! Binary classifiers sharing one score/predict contract.
//!
//! `score` is a per-row confidence that the row belongs to class 1; `predict`
//! thresholds it in a model-specific way (0.5 for probabilities, 0 for the SVM
//! margin, a strict majority for forest votes).

mod forest;
mod gbt;
mod logreg;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use forest::{bootstrap_indices, forest_fit, ForestModel, ForestOptions};
pub use gbt::{gbt_fit, log_loss, GbtModel, GbtOptions};
pub use logreg::{
    logistic_gradient, logistic_objective, logreg_fit, sigmoid, LogRegModel, LogRegOptions, Penalty, Solver,
};
pub use svm::{svm_fit, svm_objective, LinearSvmModel, SvmOptions};
pub use tree::{tree_fit, Node, TreeModel, TreeOptions};

pub trait Classifier {
    fn n_features(&self) -> usize;

    fn score(&self, x: &Matrix) -> Result<Vec<f64>>;

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>>;
}

pub(crate) fn check_features(x: &Matrix, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: x.cols(),
        });
    }
    Ok(())
}

pub(crate) fn check_binary(x: &Matrix, y: &[usize]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::NonBinaryLabels);
    }
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    LogReg,
    Svm,
    DecisionTree,
    RandomForest,
    GradientBoosting,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::LogReg,
        ClassifierKind::Svm,
        ClassifierKind::DecisionTree,
        ClassifierKind::RandomForest,
        ClassifierKind::GradientBoosting,
    ];

    /// Row label used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ClassifierKind::LogReg => "OFS-ULR",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::DecisionTree => "Decision Tree Classifier",
            ClassifierKind::RandomForest => "Random Forest Classifier",
            ClassifierKind::GradientBoosting => "Gradient Boosted Trees Classifier",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClassifierKind::LogReg => "logreg",
            ClassifierKind::Svm => "svm",
            ClassifierKind::DecisionTree => "tree",
            ClassifierKind::RandomForest => "forest",
            ClassifierKind::GradientBoosting => "gbt",
        };
        f.write_str(s)
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" | "log-reg" | "ofs-ulr" => Ok(ClassifierKind::LogReg),
            "svm" => Ok(ClassifierKind::Svm),
            "tree" | "decision-tree" => Ok(ClassifierKind::DecisionTree),
            "forest" | "random-forest" => Ok(ClassifierKind::RandomForest),
            "gbt" | "gradient-boosting" => Ok(ClassifierKind::GradientBoosting),
            other => Err(Error::invalid(format!("unknown classifier `{other}`"))),
        }
    }
}

/// Any fitted classifier, serialised with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierModel {
    LogReg(LogRegModel),
    Svm(LinearSvmModel),
    DecisionTree(TreeModel),
    RandomForest(ForestModel),
    GradientBoosting(GbtModel),
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierModel::LogReg(_) => ClassifierKind::LogReg,
            ClassifierModel::Svm(_) => ClassifierKind::Svm,
            ClassifierModel::DecisionTree(_) => ClassifierKind::DecisionTree,
            ClassifierModel::RandomForest(_) => ClassifierKind::RandomForest,
            ClassifierModel::GradientBoosting(_) => ClassifierKind::GradientBoosting,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            ClassifierModel::LogReg(m) => m,
            ClassifierModel::Svm(m) => m,
            ClassifierModel::DecisionTree(m) => m,
            ClassifierModel::RandomForest(m) => m,
            ClassifierModel::GradientBoosting(m) => m,
        }
    }
}

impl Classifier for ClassifierModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.inner().score(x)
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.inner().predict(x)
    }
}

/// Hyperparameters for every classifier; the baselines use fixed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineOptions {
    pub svm: SvmOptions,
    pub tree: TreeOptions,
    pub forest: ForestOptions,
    pub gbt: GbtOptions,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            svm: SvmOptions::default(),
            tree: TreeOptions::default(),
            forest: ForestOptions::default(),
            gbt: GbtOptions::default(),
        }
    }
}

/// Fits one of the baseline classifiers with the given options and seed.
pub fn fit_baseline(
    kind: ClassifierKind,
    x: &Matrix,
    y: &[usize],
    opts: &BaselineOptions,
    seed: u64,
) -> Result<ClassifierModel> {
    Ok(match kind {
        ClassifierKind::LogReg => {
            ClassifierModel::LogReg(logreg_fit(x, y, &LogRegOptions::default())?)
        }
        ClassifierKind::Svm => ClassifierModel::Svm(svm_fit(x, y, &SvmOptions { seed, ..opts.svm.clone() })?),
        ClassifierKind::DecisionTree => ClassifierModel::DecisionTree(tree_fit(x, y, &opts.tree)?),
        ClassifierKind::RandomForest => {
            ClassifierModel::RandomForest(forest_fit(x, y, &ForestOptions { seed, ..opts.forest.clone() })?)
        }
        ClassifierKind::GradientBoosting => ClassifierModel::GradientBoosting(gbt_fit(x, y, &opts.gbt)?),
    })
}
