//! Principal component analysis on the sample covariance matrix.
//!
//! Eigenpairs come from cyclic Jacobi rotations, which is plenty for the
//! handful of features these datasets carry. Eigenvectors are sign-normalised
//! so their largest-magnitude entry is positive, making the output stable
//! across runs and platforms.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::preprocess::FeatureMatrix;

pub const MAX_SWEEPS: usize = 100;
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const DEFAULT_VARIANCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Keep this many components (clamped to the feature count).
    Fixed(usize),
    /// Keep the fewest components whose explained ratios sum to at least this.
    Variance(f64),
}

impl Default for Selection {
    fn default() -> Self {
        Selection::Variance(DEFAULT_VARIANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as rows, ranked like `eigenvalues`.
    pub components: Matrix,
    pub explained_ratio: Vec<f64>,
    pub n_selected: usize,
}

/// Subtracts the column means. Returns the centred matrix and the means.
pub fn center(x: &FeatureMatrix) -> (FeatureMatrix, Vec<f64>) {
    let m = &x.values;
    let d = m.cols();
    let n = m.rows().max(1) as f64;
    let mut mean = vec![0.0; d];
    for r in m.row_iter() {
        for (acc, v) in mean.iter_mut().zip(r) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (v, mu) in out.row_mut(i).iter_mut().zip(&mean) {
            *v -= mu;
        }
    }
    (
        FeatureMatrix {
            values: out,
            feature_names: x.feature_names.clone(),
        },
        mean,
    )
}

/// Sample covariance `1/(n-1) Σ (x_i - x̄)(x_i - x̄)ᵀ` of already-centred data.
pub fn covariance(centered: &Matrix) -> Result<Matrix> {
    let n = centered.rows();
    if n < 2 {
        return Err(Error::invalid("covariance needs at least two rows"));
    }
    let d = centered.cols();
    let mut s = Matrix::zeros(d, d);
    for r in centered.row_iter() {
        for a in 0..d {
            let ra = r[a];
            for b in a..d {
                s[(a, b)] += ra * r[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = s[(a, b)] / denom;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    Ok(s)
}

/// Eigen-decomposition of a symmetric matrix. Returns eigenvalues in
/// descending order and the matching unit eigenvectors as matrix rows.
pub fn eig_decompose(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.cols(),
        });
    }
    if !s.is_finite() {
        return Err(Error::NonFinite);
    }
    let sym_tol = 1e-9 * s.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            let gap = (s[(i, j)] - s[(j, i)]).abs();
            if gap > sym_tol {
                return Err(Error::NotSymmetric(gap));
            }
        }
    }

    let mut a = s.clone();
    let mut v = Matrix::identity(n);
    let frob = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = OFF_DIAGONAL_TOL * frob.max(f64::MIN_POSITIVE);
    let off_norm = |a: &Matrix| {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };

    let mut converged = off_norm(&a) <= tol;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&a) <= tol;
    }
    if !converged {
        return Err(Error::NoConvergence("jacobi eigensolver"));
    }

    // eigenvectors are the columns of v
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut vec = v.column(j);
            normalize_sign(&mut vec);
            (a[(j, j)], vec)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    // order numerically tied eigenvalues by their eigenvector, lexicographically
    let tie = 1e-12 * frob.max(1.0);
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && (pairs[end - 1].0 - pairs[end].0).abs() <= tie {
            end += 1;
        }
        pairs[start..end].sort_by(|x, y| lex_cmp(&y.1, &x.1));
        start = end;
    }

    // values within a tie group differ by round-off only; keep them sorted
    let mut values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    let rows: Vec<Vec<f64>> = pairs.into_iter().map(|p| p.1).collect();
    let components = if n == 0 {
        Matrix::zeros(0, 0)
    } else {
        Matrix::from_rows(&rows)?
    };
    Ok((values, components))
}

fn normalize_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v.get(idx).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Number of components to keep under `policy`.
pub fn select_n(model: &PcaModel, policy: Selection) -> Result<usize> {
    let d = model.eigenvalues.len();
    match policy {
        Selection::Fixed(n) if n < 1 => Err(Error::invalid("component count must be at least 1")),
        Selection::Fixed(n) => Ok(n.min(d).max(1)),
        Selection::Variance(tau) => {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::invalid(format!("variance threshold {tau} must lie in (0, 1]")));
            }
            if tau >= 1.0 {
                return Ok(d);
            }
            let mut cum = 0.0;
            for (i, r) in model.explained_ratio.iter().enumerate() {
                cum += r;
                if cum >= tau {
                    return Ok(i + 1);
                }
            }
            Ok(d)
        }
    }
}

impl PcaModel {
    pub fn fit(x: &FeatureMatrix, policy: Selection) -> Result<PcaModel> {
        if !x.values.is_finite() {
            return Err(Error::NonFinite);
        }
        let (centered, mean) = center(x);
        let s = covariance(&centered.values)?;
        let (eigenvalues, components) = eig_decompose(&s)?;
        let clamped: Vec<f64> = eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        let d = clamped.len();
        let explained_ratio = if total > 0.0 {
            clamped.iter().map(|l| l / total).collect()
        } else {
            vec![1.0 / d as f64; d]
        };
        let mut model = PcaModel {
            mean,
            eigenvalues,
            components,
            explained_ratio,
            n_selected: d,
        };
        model.n_selected = select_n(&model, policy)?;
        Ok(model)
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Projects onto the selected components.
    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        transform(x, self, self.n_selected)
    }

    /// Maps `n`-component scores back to the original feature space.
    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        let n = z.cols();
        if n > self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: n,
            });
        }
        let top: Vec<usize> = (0..n).collect();
        let c = self.components.select_rows(&top);
        let mut out = z.matmul(&c)?;
        for i in 0..out.rows() {
            for (v, mu) in out.row_mut(i).iter_mut().zip(&self.mean) {
                *v += mu;
            }
        }
        Ok(out)
    }
}

/// `(X - mean) · topNᵀ`, with features named `PC1..PCn`.
pub fn transform(x: &FeatureMatrix, model: &PcaModel, n: usize) -> Result<FeatureMatrix> {
    let d = model.n_features();
    if x.n_features() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.n_features(),
        });
    }
    if n == 0 || n > d {
        return Err(Error::invalid(format!("cannot keep {n} of {d} components")));
    }
    let mut out = Matrix::zeros(x.n_rows(), n);
    let mut centered = vec![0.0; d];
    for (i, r) in x.values.row_iter().enumerate() {
        for j in 0..d {
            centered[j] = r[j] - model.mean[j];
        }
        for k in 0..n {
            out[(i, k)] = crate::linalg::dot(&centered, model.components.row(k));
        }
    }
    let names = (1..=n).map(|k| format!("PC{k}")).collect();
    FeatureMatrix::new(out, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::unnamed(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn center_examples() {
        let (c, mean) = center(&fm(&[&[1.0], &[2.0], &[3.0]]));
        assert_eq!(mean, vec![2.0]);
        assert_eq!(c.values.column(0), vec![-1.0, 0.0, 1.0]);
        let (c, mean) = center(&fm(&[&[-1.0], &[1.0]]));
        assert_eq!(mean, vec![0.0]);
        assert_eq!(c.values.column(0), vec![-1.0, 1.0]);
        let (c, _) = center(&fm(&[&[4.0, -2.0]]));
        assert_eq!(c.values.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn covariance_by_definition() {
        let (c, _) = center(&fm(&[&[0.0, 0.0], &[2.0, 2.0]]));
        let s = covariance(&c.values).unwrap();
        assert_eq!(s, Matrix::from_rows(&[[2.0, 2.0], [2.0, 2.0]]).unwrap());
        let (c, _) = center(&fm(&[&[1.0, 3.0], &[2.0, 3.0], &[5.0, 3.0]]));
        let s = covariance(&c.values).unwrap();
        assert_eq!(s.row(1), &[0.0, 0.0]);
        assert_eq!(s.column(1), vec![0.0, 0.0]);
        assert!(covariance(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn eig_diagonal() {
        let s = Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let (l, v) = eig_decompose(&s).unwrap();
        assert_eq!(l, vec![2.0, 1.0]);
        assert_eq!(v.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn eig_two_by_two() {
        // characteristic polynomial (2-λ)² - 1 = 0 → λ = 3, 1
        let s = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let (l, v) = eig_decompose(&s).unwrap();
        assert!((l[0] - 3.0).abs() < 1e-12 && (l[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[(0, 0)] - h).abs() < 1e-12 && (v[(0, 1)] - h).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(eig_decompose(&s), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn select_n_policies() {
        let model = PcaModel {
            mean: vec![0.0; 3],
            eigenvalues: vec![0.7, 0.25, 0.05],
            components: Matrix::identity(3),
            explained_ratio: vec![0.7, 0.25, 0.05],
            n_selected: 3,
        };
        assert_eq!(select_n(&model, Selection::Variance(0.95)).unwrap(), 2);
        assert_eq!(select_n(&model, Selection::Variance(1.0)).unwrap(), 3);
        assert_eq!(select_n(&model, Selection::Fixed(2)).unwrap(), 2);
        assert_eq!(select_n(&model, Selection::Fixed(9)).unwrap(), 3);
        assert!(select_n(&model, Selection::Fixed(0)).is_err());
        let five = PcaModel {
            mean: vec![0.0; 5],
            eigenvalues: vec![1.0; 5],
            components: Matrix::identity(5),
            explained_ratio: vec![0.2; 5],
            n_selected: 5,
        };
        assert_eq!(select_n(&five, Selection::Fixed(3)).unwrap(), 3);
    }

    #[test]
    fn line_data_rank_one_reconstruction() {
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        let x = FeatureMatrix::unnamed(Matrix::from_rows(&rows).unwrap()).unwrap();
        let m = PcaModel::fit(&x, Selection::Fixed(1)).unwrap();
        let z = m.transform(&x).unwrap();
        let back = m.inverse_transform(&z.values).unwrap();
        for i in 0..10 {
            for j in 0..2 {
                assert!((back[(i, j)] - x.values[(i, j)]).abs() < 1e-9);
            }
        }
        assert_eq!(z.feature_names, ["PC1"]);
    }

    #[test]
    fn transform_dimension_mismatch() {
        let x = fm(&[&[1.0, 2.0], &[2.0, 1.0], &[0.0, 0.0]]);
        let m = PcaModel::fit(&x, Selection::Fixed(2)).unwrap();
        assert!(m.transform(&fm(&[&[1.0]])).is_err());
    }
}
