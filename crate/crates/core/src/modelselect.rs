//! K-fold cross-validation and exhaustive grid search for logistic regression.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{logreg_fit, Classifier, LogRegModel, LogRegOptions, Penalty, Solver};
use crate::error::{Error, Result};
use crate::metrics::confusion;
use crate::pca::{PcaModel, Selection};
use crate::preprocess::{FeatureMatrix, Scaler, ScalerKind};

/// Seeded K-fold partition. Rows are shuffled, then cut into contiguous
/// folds; the first `n % k` folds hold one extra row.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("cannot make {k} folds from {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let val = idx[start..start + len].to_vec();
        let train = idx[..start].iter().chain(&idx[start + len..]).copied().collect();
        folds.push((train, val));
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    #[default]
    Accuracy,
    F1,
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMetric::Accuracy => "accuracy",
            SelectionMetric::F1 => "f1",
        })
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(SelectionMetric::Accuracy),
            "f1" => Ok(SelectionMetric::F1),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamGrid {
    pub solver: Vec<Solver>,
    pub penalty: Vec<Penalty>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            solver: vec![Solver::Gd, Solver::Newton],
            penalty: vec![Penalty::L1, Penalty::L2, Penalty::None],
            c: vec![0.01, 0.1, 1.0, 10.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub solver: Solver,
    pub penalty: Penalty,
    pub c: f64,
}

impl GridCell {
    fn is_valid(&self) -> bool {
        !(self.penalty == Penalty::L1 && self.solver == Solver::Newton)
    }

    /// Cells without a penalty ignore C, so they share one fit per solver.
    fn fit_key(&self) -> (Solver, Penalty, Option<u64>) {
        let c = (self.penalty != Penalty::None).then_some(self.c.to_bits());
        (self.solver, self.penalty, c)
    }
}

impl ParamGrid {
    /// Valid cells in enumeration order, and the skipped invalid ones.
    pub fn cells(&self) -> Result<(Vec<GridCell>, Vec<GridCell>)> {
        if self.c.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::invalid("grid C values must be positive and finite"));
        }
        let (mut valid, mut skipped) = (Vec::new(), Vec::new());
        for &solver in &self.solver {
            for &penalty in &self.penalty {
                for &c in &self.c {
                    let cell = GridCell { solver, penalty, c };
                    if cell.is_valid() {
                        valid.push(cell);
                    } else {
                        skipped.push(cell);
                    }
                }
            }
        }
        if valid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok((valid, skipped))
    }
}

/// Transforms refit inside every fold on that fold's training rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldTransform {
    pub scaler: Option<ScalerKind>,
    pub pca: Option<Selection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub metric: SelectionMetric,
    pub tol: f64,
    pub max_iter: usize,
    pub transform: FoldTransform,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 3,
            seed: 0,
            metric: SelectionMetric::Accuracy,
            tol: 1e-6,
            max_iter: 1000,
            transform: FoldTransform::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub cells: Vec<CellResult>,
    pub skipped: Vec<GridCell>,
    pub best: usize,
    pub metric: SelectionMetric,
    pub folds: usize,
    pub seed: u64,
}

impl CvResult {
    pub fn best_cell(&self) -> &CellResult {
        &self.cells[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("solver,penalty,C");
        for f in 0..self.folds {
            out.push_str(&format!(",fold{f}"));
        }
        out.push_str(",mean,std,best\n");
        for (i, r) in self.cells.iter().enumerate() {
            out.push_str(&format!("{},{},{}", r.cell.solver, r.cell.penalty, r.cell.c));
            for s in &r.fold_scores {
                out.push_str(&format!(",{s}"));
            }
            out.push_str(&format!(",{},{},{}\n", r.mean, r.std, i == self.best));
        }
        out
    }
}

/// Fitted transforms applied before the classifier; identity when empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub scaler: Option<Scaler>,
    pub pca: Option<PcaModel>,
}

impl FittedTransform {
    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut x = x.clone();
        if let Some(s) = &self.scaler {
            x = s.apply(&x)?;
        }
        if let Some(p) = &self.pca {
            x = p.transform(&x)?;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub cv: CvResult,
    pub model: LogRegModel,
    pub transform: FittedTransform,
}

/// Which statistic was fitted, and on which row indices of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStage {
    Scaler,
    Pca,
}

pub struct FitEvent<'a> {
    /// `None` for the final refit on all rows.
    pub fold: Option<usize>,
    pub stage: FitStage,
    pub rows: &'a [usize],
}

fn fit_transform(
    x: &FeatureMatrix,
    rows: &[usize],
    plan: &FoldTransform,
    fold: Option<usize>,
    observer: &(dyn Fn(FitEvent<'_>) + Sync),
) -> Result<FittedTransform> {
    let mut out = FittedTransform::default();
    let mut part = x.select_rows(rows);
    if let Some(kind) = plan.scaler {
        observer(FitEvent {
            fold,
            stage: FitStage::Scaler,
            rows,
        });
        let s = Scaler::fit(&part, kind)?;
        part = s.apply(&part)?;
        out.scaler = Some(s);
    }
    if let Some(sel) = plan.pca {
        observer(FitEvent {
            fold,
            stage: FitStage::Pca,
            rows,
        });
        out.pca = Some(PcaModel::fit(&part, sel)?);
    }
    Ok(out)
}

fn metric_value(metric: SelectionMetric, y: &[usize], pred: &[usize]) -> Result<f64> {
    let c = confusion(y, pred)?;
    Ok(match metric {
        SelectionMetric::Accuracy => c.accuracy(),
        SelectionMetric::F1 => c.f1(),
    })
}

fn better(a: &CellResult, b: &CellResult) -> bool {
    if a.mean != b.mean {
        return a.mean > b.mean;
    }
    let ka = (a.cell.c, a.cell.penalty.rank(), a.cell.solver.rank());
    let kb = (b.cell.c, b.cell.penalty.rank(), b.cell.solver.rank());
    ka < kb
}

pub fn grid_search(x: &FeatureMatrix, y: &[usize], grid: &ParamGrid, opts: &CvOptions) -> Result<GridSearchResult> {
    grid_search_observed(x, y, grid, opts, &|_| {})
}

/// Grid search that reports every per-fold transform fit to `observer`.
pub fn grid_search_observed(
    x: &FeatureMatrix,
    y: &[usize],
    grid: &ParamGrid,
    opts: &CvOptions,
    observer: &(dyn Fn(FitEvent<'_>) + Sync),
) -> Result<GridSearchResult> {
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    let (cells, skipped) = grid.cells()?;
    let folds = kfold_indices(x.n_rows(), opts.folds, opts.seed)?;

    let prepared = folds
        .iter()
        .enumerate()
        .map(|(f, (train, val))| {
            let t = fit_transform(x, train, &opts.transform, Some(f), observer)?;
            let xt = t.apply(&x.select_rows(train))?;
            let xv = t.apply(&x.select_rows(val))?;
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let yv: Vec<usize> = val.iter().map(|&i| y[i]).collect();
            Ok((xt, yt, xv, yv))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut keys: Vec<(Solver, Penalty, Option<u64>)> = Vec::new();
    let mut key_of = Vec::with_capacity(cells.len());
    for cell in &cells {
        let k = cell.fit_key();
        let pos = keys.iter().position(|e| *e == k).unwrap_or_else(|| {
            keys.push(k);
            keys.len() - 1
        });
        key_of.push(pos);
    }
    let jobs: Vec<(usize, usize)> = (0..keys.len()).flat_map(|k| (0..folds.len()).map(move |f| (k, f))).collect();
    let scores = jobs
        .par_iter()
        .map(|&(k, f)| {
            let (solver, penalty, c) = keys[k];
            let lo = LogRegOptions {
                penalty,
                c: c.map_or(1.0, f64::from_bits),
                solver,
                tol: opts.tol,
                max_iter: opts.max_iter,
            };
            let (xt, yt, xv, yv) = &prepared[f];
            let m = logreg_fit(&xt.values, yt, &lo)?;
            metric_value(opts.metric, yv, &m.predict(&xv.values)?)
        })
        .collect::<Result<Vec<f64>>>()?;

    let nf = folds.len();
    let results: Vec<CellResult> = cells
        .iter()
        .zip(&key_of)
        .map(|(&cell, &k)| {
            let fold_scores = scores[k * nf..(k + 1) * nf].to_vec();
            let mean = fold_scores.iter().sum::<f64>() / nf as f64;
            let var = fold_scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / nf as f64;
            CellResult {
                cell,
                fold_scores,
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    let mut best = 0;
    for i in 1..results.len() {
        if better(&results[i], &results[best]) {
            best = i;
        }
    }

    let all: Vec<usize> = (0..x.n_rows()).collect();
    let transform = fit_transform(x, &all, &opts.transform, None, observer)?;
    let xa = transform.apply(x)?;
    let bc = results[best].cell;
    let model = logreg_fit(
        &xa.values,
        y,
        &LogRegOptions {
            penalty: bc.penalty,
            c: bc.c,
            solver: bc.solver,
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    )?;

    Ok(GridSearchResult {
        cv: CvResult {
            cells: results,
            skipped,
            best,
            metric: opts.metric,
            folds: nf,
            seed: opts.seed,
        },
        model,
        transform,
    })
}
