//! Table → numeric matrix conversion, feature scaling and train/test splitting.

use std::collections::HashMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, Table, Value};
use crate::linalg::Matrix;

/// Dense numeric feature matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, feature_names: Vec<String>) -> Result<Self> {
        if feature_names.len() != values.cols() {
            return Err(Error::DimensionMismatch {
                expected: values.cols(),
                found: feature_names.len(),
            });
        }
        if !values.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(FeatureMatrix { values, feature_names })
    }

    /// Names columns `x1..xd`.
    pub fn unnamed(values: Matrix) -> Result<Self> {
        let names = (1..=values.cols()).map(|j| format!("x{j}")).collect();
        FeatureMatrix::new(values, names)
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_features(&self) -> usize {
        self.values.cols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select_rows(indices),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn select_features<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::UnknownColumn(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            values: self.values.select_cols(&idx),
            feature_names: names.iter().map(|n| n.as_ref().to_string()).collect(),
        })
    }
}

/// Integer class ids, contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        LabelVector { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector::new(indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingPolicy {
    /// Categories become integer codes in order of first appearance.
    Label,
    /// One 0/1 column per category.
    OneHot,
}

impl FromStr for EncodingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label" => Ok(EncodingPolicy::Label),
            "onehot" | "one-hot" => Ok(EncodingPolicy::OneHot),
            other => Err(Error::invalid(format!("unknown encoding `{other}`"))),
        }
    }
}

pub const DEFAULT_ONEHOT_CAP: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnEncoding {
    Numeric,
    Label { categories: Vec<String> },
    OneHot { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub encoding: ColumnEncoding,
}

/// Frozen column → feature mapping, learned once and reapplied to later batches.
///
/// Under label encoding a category not seen at fit time maps to the next unused
/// code; under one-hot it becomes an all-zero block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub columns: Vec<EncodedColumn>,
}

impl Encoder {
    pub fn fit(table: &Table, policy: EncodingPolicy, onehot_cap: usize) -> Result<Encoder> {
        let mut columns = Vec::with_capacity(table.columns().len());
        for c in table.columns() {
            if c.cells.iter().any(Option::is_none) {
                return Err(Error::MissingCells(c.name.clone()));
            }
            let all_numeric = c.cells.iter().flatten().all(|v| v.as_f64().is_some());
            let encoding = if c.kind.is_numeric() || (c.kind == ColumnKind::Mixed && all_numeric) {
                ColumnEncoding::Numeric
            } else {
                let mut seen = HashMap::new();
                let mut categories = Vec::new();
                for v in c.cells.iter().flatten() {
                    let key = v.to_string();
                    if !seen.contains_key(&key) {
                        seen.insert(key.clone(), categories.len());
                        categories.push(key);
                    }
                }
                match policy {
                    EncodingPolicy::Label => ColumnEncoding::Label { categories },
                    EncodingPolicy::OneHot => {
                        if categories.len() > onehot_cap {
                            return Err(Error::Cardinality {
                                column: c.name.clone(),
                                cardinality: categories.len(),
                                cap: onehot_cap,
                            });
                        }
                        ColumnEncoding::OneHot { categories }
                    }
                }
            };
            columns.push(EncodedColumn {
                name: c.name.clone(),
                kind: c.kind,
                encoding,
            });
        }
        Ok(Encoder { columns })
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for c in &self.columns {
            match &c.encoding {
                ColumnEncoding::Numeric | ColumnEncoding::Label { .. } => names.push(c.name.clone()),
                ColumnEncoding::OneHot { categories } => {
                    names.extend(categories.iter().map(|k| format!("{}={}", c.name, k)))
                }
            }
        }
        names
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Encodes a table whose columns include every fitted column (extra columns are ignored).
    pub fn transform(&self, table: &Table) -> Result<FeatureMatrix> {
        let n = table.row_count();
        let names = self.feature_names();
        let mut out = Matrix::zeros(n, names.len());
        let mut offset = 0;
        for ec in &self.columns {
            let col = table.column(&ec.name)?;
            if col.cells.iter().any(Option::is_none) {
                return Err(Error::MissingCells(ec.name.clone()));
            }
            match &ec.encoding {
                ColumnEncoding::Numeric => {
                    for (i, v) in col.cells.iter().flatten().enumerate() {
                        out[(i, offset)] = v.as_f64().ok_or_else(|| {
                            Error::invalid(format!("non-numeric value `{v}` in numeric column `{}`", ec.name))
                        })?;
                    }
                    offset += 1;
                }
                ColumnEncoding::Label { categories } => {
                    let lookup = index_of(categories);
                    for (i, v) in col.cells.iter().flatten().enumerate() {
                        let code = lookup.get(v.to_string().as_str()).copied().unwrap_or(categories.len());
                        out[(i, offset)] = code as f64;
                    }
                    offset += 1;
                }
                ColumnEncoding::OneHot { categories } => {
                    let lookup = index_of(categories);
                    for (i, v) in col.cells.iter().flatten().enumerate() {
                        if let Some(&k) = lookup.get(v.to_string().as_str()) {
                            out[(i, offset + k)] = 1.0;
                        }
                    }
                    offset += categories.len();
                }
            }
        }
        FeatureMatrix::new(out, names)
    }
}

fn index_of(categories: &[String]) -> HashMap<&str, usize> {
    categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
}

/// Fits an encoder on `table` and applies it.
pub fn encode(table: &Table, policy: EncodingPolicy) -> Result<FeatureMatrix> {
    Encoder::fit(table, policy, DEFAULT_ONEHOT_CAP)?.transform(table)
}

/// Reads a numeric label column as class ids.
pub fn labels_from_column(table: &Table, name: &str) -> Result<LabelVector> {
    let col = table.column(name)?;
    col.cells
        .iter()
        .map(|c| match c {
            Some(Value::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(Value::Real(r)) if *r >= 0.0 && r.fract() == 0.0 => Ok(*r as usize),
            _ => Err(Error::invalid(format!("label column `{name}` must hold non-negative integers"))),
        })
        .collect::<Result<Vec<_>>>()
        .map(LabelVector::new)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    MinMax,
    ZScore,
}

impl FromStr for ScalerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(ScalerKind::MinMax),
            "zscore" => Ok(ScalerKind::ZScore),
            other => Err(Error::invalid(format!("unknown scaler `{other}`"))),
        }
    }
}

/// Per-feature affine scaler. `offset` is the min (minmax) or mean (zscore);
/// `scale` is `max - min` or the population standard deviation. A zero scale
/// marks a constant feature, which maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &FeatureMatrix, kind: ScalerKind) -> Result<Scaler> {
        let m = &x.values;
        if m.rows() == 0 {
            return Err(Error::invalid("cannot fit a scaler on zero rows"));
        }
        let d = m.cols();
        let n = m.rows() as f64;
        let (offset, scale) = match kind {
            ScalerKind::MinMax => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for r in m.row_iter() {
                    for j in 0..d {
                        lo[j] = lo[j].min(r[j]);
                        hi[j] = hi[j].max(r[j]);
                    }
                }
                let scale = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
                (lo, scale)
            }
            ScalerKind::ZScore => {
                let mut mean = vec![0.0; d];
                for r in m.row_iter() {
                    for j in 0..d {
                        mean[j] += r[j];
                    }
                }
                mean.iter_mut().for_each(|v| *v /= n);
                let mut var = vec![0.0; d];
                for r in m.row_iter() {
                    for j in 0..d {
                        let dv = r[j] - mean[j];
                        var[j] += dv * dv;
                    }
                }
                let sd = var.iter().map(|v| (v / n).sqrt()).collect();
                (mean, sd)
            }
        };
        Ok(Scaler { kind, offset, scale })
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let d = self.offset.len();
        if x.n_features() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.n_features(),
            });
        }
        let mut out = x.values.clone();
        for i in 0..out.rows() {
            let r = out.row_mut(i);
            for j in 0..d {
                r[j] = if self.scale[j] > 0.0 {
                    (r[j] - self.offset[j]) / self.scale[j]
                } else {
                    0.0
                };
            }
        }
        FeatureMatrix::new(out, x.feature_names.clone())
    }

    /// Maps scaled values back. Constant features come back as their fitted offset.
    pub fn inverse(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let d = self.offset.len();
        if x.n_features() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.n_features(),
            });
        }
        let mut out = x.values.clone();
        for i in 0..out.rows() {
            let r = out.row_mut(i);
            for j in 0..d {
                r[j] = r[j] * self.scale[j] + self.offset[j];
            }
        }
        FeatureMatrix::new(out, x.feature_names.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded random permutation; the first `floor(ratio * n)` indices train, the rest test.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<SplitIndices> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} rows")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * n as f64).floor() as usize;
    let test = idx.split_off(n_train);
    Ok(SplitIndices { train: idx, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_csv, LoadOptions};
    use proptest::prelude::*;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::unnamed(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn label_encoding_by_first_appearance() {
        let t = read_csv("c,n\nred,1.5\nblue,2\nred,3\n".as_bytes(), "t", &LoadOptions::default()).unwrap();
        let x = encode(&t, EncodingPolicy::Label).unwrap();
        assert_eq!(x.values.column(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(x.values.column(1), vec![1.5, 2.0, 3.0]);
        assert_eq!(x, encode(&t, EncodingPolicy::Label).unwrap());
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let t = read_csv("c\na\nb\nc\nb\n".as_bytes(), "t", &LoadOptions::default()).unwrap();
        let x = encode(&t, EncodingPolicy::OneHot).unwrap();
        assert_eq!(x.n_features(), 3);
        assert_eq!(x.feature_names, ["c=a", "c=b", "c=c"]);
        for r in x.values.row_iter() {
            assert_eq!(r.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn one_hot_cardinality_cap() {
        let t = read_csv("c\na\nb\nc\n".as_bytes(), "t", &LoadOptions::default()).unwrap();
        let err = Encoder::fit(&t, EncodingPolicy::OneHot, 2).unwrap_err();
        assert!(matches!(err, Error::Cardinality { cardinality: 3, cap: 2, .. }));
    }

    #[test]
    fn encode_rejects_missing() {
        let t = read_csv("c,d\na,1\n,2\n".as_bytes(), "t", &LoadOptions::default()).unwrap();
        assert!(matches!(encode(&t, EncodingPolicy::Label), Err(Error::MissingCells(_))));
    }

    #[test]
    fn unseen_category_gets_next_code() {
        let fit = read_csv("c\na\nb\n".as_bytes(), "t", &LoadOptions::default()).unwrap();
        let enc = Encoder::fit(&fit, EncodingPolicy::Label, DEFAULT_ONEHOT_CAP).unwrap();
        let new = read_csv("c\nb\nz\n".as_bytes(), "t", &LoadOptions::default()).unwrap();
        assert_eq!(enc.transform(&new).unwrap().values.column(0), vec![1.0, 2.0]);
    }

    #[test]
    fn minmax_maps_into_unit_interval() {
        let x = fm(&[&[2.0], &[4.0], &[6.0]]);
        let s = Scaler::fit(&x, ScalerKind::MinMax).unwrap();
        assert_eq!(s.apply(&x).unwrap().values.column(0), vec![0.0, 0.5, 1.0]);
        let held_out = fm(&[&[8.0]]);
        assert_eq!(s.apply(&held_out).unwrap().values[(0, 0)], 1.5);
    }

    #[test]
    fn zscore_uses_population_sd() {
        let x = fm(&[&[1.0], &[3.0]]);
        let s = Scaler::fit(&x, ScalerKind::ZScore).unwrap();
        assert_eq!(s.apply(&x).unwrap().values.column(0), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let x = fm(&[&[5.0, 1.0], &[5.0, 2.0]]);
        for kind in [ScalerKind::MinMax, ScalerKind::ZScore] {
            let s = Scaler::fit(&x, kind).unwrap();
            assert_eq!(s.apply(&x).unwrap().values.column(0), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn split_sizes() {
        let s = split(140_298, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (112_238, 28_060));
        let s = split(29_143, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (23_314, 5_829));
        assert_eq!(split(100, 0.8, 3).unwrap(), split(100, 0.8, 3).unwrap());
        assert!(split(1, 0.8, 3).is_err());
        assert!(split(10, 1.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions(n in 2usize..500, ratio in 0.05f64..0.95, seed: u64) {
            let s = split(n, ratio, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(s.train.len(), (ratio * n as f64).floor() as usize);
        }

        #[test]
        fn scaler_inverse_recovers_input(
            rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..40),
            zscore: bool,
        ) {
            let x = FeatureMatrix::unnamed(Matrix::from_rows(&rows).unwrap()).unwrap();
            let kind = if zscore { ScalerKind::ZScore } else { ScalerKind::MinMax };
            let s = Scaler::fit(&x, kind).unwrap();
            let scaled = s.apply(&x).unwrap();
            let back = s.inverse(&scaled).unwrap();
            for j in 0..3 {
                if s.scale[j] == 0.0 { continue; }
                let col = scaled.values.column(j);
                match kind {
                    ScalerKind::MinMax => prop_assert!(col.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v))),
                    ScalerKind::ZScore => {
                        let mean = col.iter().sum::<f64>() / col.len() as f64;
                        prop_assert!(mean.abs() < 1e-9);
                    }
                }
                for i in 0..x.n_rows() {
                    prop_assert!((back.values[(i, j)] - x.values[(i, j)]).abs() < 1e-9);
                }
            }
        }
    }
}
