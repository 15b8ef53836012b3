use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{Column, ColumnKind, Table, Value};

/// Gaussian blobs with unit within-cluster variance. Returns the table of
/// features `x1..xd` and the generating cluster of every row.
///
/// When `n_clusters <= d` the centres sit on scaled unit vectors so every
/// pair is exactly `separation` apart; otherwise they are spaced
/// `separation` apart along the first axis. Row `i` belongs to cluster
/// `i % n_clusters`.
pub fn generate_synthetic(
    n: usize,
    d: usize,
    n_clusters: usize,
    separation: f64,
    seed: u64,
) -> Result<(Table, Vec<usize>)> {
    if d == 0 || n_clusters == 0 {
        return Err(Error::invalid("synthetic data needs d >= 1 and at least one cluster"));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::invalid(format!("separation {separation} must be finite and non-negative")));
    }
    let mut centres = vec![vec![0.0; d]; n_clusters];
    for (c, centre) in centres.iter_mut().enumerate() {
        if n_clusters <= d {
            centre[c] = separation / std::f64::consts::SQRT_2;
        } else {
            centre[0] = separation * c as f64;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<Option<Value>>> = vec![Vec::with_capacity(n); d];
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % n_clusters;
        truth.push(c);
        for (j, col) in cols.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            col.push(Some(Value::Real(centres[c][j] + z)));
        }
    }
    let columns = cols
        .into_iter()
        .enumerate()
        .map(|(j, cells)| Column::new(format!("x{}", j + 1), ColumnKind::Real, cells))
        .collect();
    Ok((Table::new("synthetic", columns)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::squared_distance;

    #[test]
    fn shape_and_reproducibility() {
        let (a, ta) = generate_synthetic(50, 3, 2, 10.0, 1).unwrap();
        let (b, tb) = generate_synthetic(50, 3, 2, 10.0, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.row_count(), 50);
        assert_eq!(a.column_names(), ["x1", "x2", "x3"]);
        assert_eq!(ta.iter().filter(|&&c| c == 1).count(), 25);
    }

    #[test]
    fn cluster_means_are_separation_apart() {
        let (t, truth) = generate_synthetic(4000, 4, 3, 6.0, 5).unwrap();
        let mut means = vec![vec![0.0; 4]; 3];
        let mut counts = [0.0; 3];
        for i in 0..t.row_count() {
            counts[truth[i]] += 1.0;
            for j in 0..4 {
                means[truth[i]][j] += t.columns()[j].cells[i].as_ref().unwrap().as_f64().unwrap();
            }
        }
        for (m, c) in means.iter_mut().zip(counts) {
            m.iter_mut().for_each(|v| *v /= c);
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let dist = squared_distance(&means[a], &means[b]).sqrt();
                assert!((dist - 6.0).abs() < 0.2, "{dist}");
            }
        }
    }
}
