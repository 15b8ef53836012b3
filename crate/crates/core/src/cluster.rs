//! Label derivation for unlabeled data: Lloyd's k-means with cached closest
//! distances, k-means++ seeding, restarts and elbow-based choice of k.
//!
//! Every point keeps the Euclidean distance to its centroid from the previous
//! assignment pass. After centroids move, the point's distance to its own
//! (moved) centroid is recomputed first. If that distance is still below the
//! cached one minus the largest shift of any other centroid, no other centroid
//! can have become closer and the point stays put; only otherwise are all k
//! distances evaluated. When the other centroids are static this reduces to
//! "stay if the distance did not grow", and the drift term makes the shortcut
//! produce exactly the assignments of plain Lloyd iterations.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::preprocess::{FeatureMatrix, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    PlusPlus,
    RandomRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reassignment {
    /// Evaluate all k distances for every point on every pass.
    Full,
    /// Skip the full scan when the cached distance proves the point cannot move.
    CachedDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub restarts: usize,
    pub init: Init,
    pub reassignment: Reassignment,
}

impl KMeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansOptions {
            k,
            seed,
            max_iter: 300,
            tol: 1e-10,
            restarts: 5,
            init: Init::PlusPlus,
            reassignment: Reassignment::CachedDistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Euclidean distance from each row to its assigned centroid.
    pub closest_dist: Vec<f64>,
    pub wcss: f64,
    pub iterations: usize,
    pub seed: u64,
    /// WCSS after the initial assignment and after every iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wcss_trace: Vec<f64>,
    /// Number of rows that needed a full k-distance scan, summed over iterations.
    #[serde(default)]
    pub full_scans: usize,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Cluster id → class id: larger clusters get smaller class ids; equal sizes
    /// are ordered by lexicographically smaller centroid.
    pub fn class_mapping(&self) -> Vec<usize> {
        let sizes = self.cluster_sizes();
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| {
            sizes[b].cmp(&sizes[a]).then_with(|| lex_cmp(self.centroids.row(a), self.centroids.row(b)))
        });
        let mut mapping = vec![0; self.k];
        for (class, &cluster) in order.iter().enumerate() {
            mapping[cluster] = class;
        }
        mapping
    }

    /// Nearest-centroid cluster id for new rows.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.cols() != self.centroids.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.centroids.cols(),
                found: x.cols(),
            });
        }
        Ok(x.row_iter().map(|r| nearest(r, &self.centroids).0).collect())
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Class labels with class 0 the largest cluster.
pub fn labels_of(model: &ClusterModel) -> LabelVector {
    let mapping = model.class_mapping();
    LabelVector::new(model.assignments.iter().map(|&a| mapping[a]).collect())
}

/// Nearest centroid by squared distance; ties go to the lowest index.
fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..centroids.rows() {
        let d = squared_distance(row, centroids.row(j));
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn validate(x: &Matrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > x.rows() {
        return Err(Error::invalid(format!("k = {k} exceeds the {} rows", x.rows())));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Fits k-means with `restarts` seeded initialisations, keeping the lowest WCSS.
pub fn kmeans_fit(x: &FeatureMatrix, opts: &KMeansOptions) -> Result<ClusterModel> {
    let m = &x.values;
    validate(m, opts.k)?;
    let mut best: Option<ClusterModel> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = restart_rng(opts.seed, restart);
        let init = match opts.init {
            Init::PlusPlus => plus_plus_init(m, opts.k, &mut rng),
            Init::RandomRows => random_rows_init(m, opts.k, &mut rng),
        };
        let mut model = lloyd(m, init, opts)?;
        model.seed = opts.seed;
        if best.as_ref().is_none_or(|b| model.wcss < b.wcss) {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Runs Lloyd iterations from the given centroids (no restarts, no randomness).
pub fn kmeans_from(x: &Matrix, centroids: Matrix, opts: &KMeansOptions) -> Result<ClusterModel> {
    validate(x, centroids.rows())?;
    if centroids.cols() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            found: centroids.cols(),
        });
    }
    lloyd(x, centroids, opts)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// k-means++ seeding: first centre uniform, the rest drawn with probability
/// proportional to squared distance from the nearest chosen centre.
pub fn plus_plus_init<R: Rng>(x: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = x.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = x.row_iter().map(|r| squared_distance(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            if d2[pick] == 0.0 {
                // only reachable through rounding at the tail
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // all remaining rows coincide with chosen centres
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, r) in x.row_iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(r, x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

pub fn random_rows_init<R: Rng>(x: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let idx = sample(rng, x.rows(), k).into_vec();
    x.select_rows(&idx)
}

fn lloyd(x: &Matrix, mut centroids: Matrix, opts: &KMeansOptions) -> Result<ClusterModel> {
    let n = x.rows();
    let k = centroids.rows();
    let d = x.cols();
    let mut assignments = vec![0usize; n];
    let mut closest = vec![0.0f64; n];
    let mut full_scans = 0usize;

    for (i, r) in x.row_iter().enumerate() {
        let (a, d2) = nearest(r, &centroids);
        assignments[i] = a;
        closest[i] = d2.sqrt();
    }
    full_scans += n;
    let mut wcss: f64 = closest.iter().map(|c| c * c).sum();
    let mut trace = vec![wcss];
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;

        // centroid update, sums accumulated in row order
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, r) in x.row_iter().enumerate() {
            let a = assignments[i];
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut next = Matrix::zeros(k, d);
        let mut repaired = false;
        let mut taken: Vec<usize> = Vec::new();
        for j in 0..k {
            if counts[j] > 0 {
                let c = counts[j] as f64;
                for (dst, s) in next.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *dst = s / c;
                }
            } else {
                // reseed an empty cluster at the worst-served point
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| closest[a].total_cmp(&closest[b]).then(b.cmp(&a)))
                    .expect("n >= k");
                taken.push(far);
                next.row_mut(j).copy_from_slice(x.row(far));
                repaired = true;
            }
        }
        let shifts: Vec<f64> = (0..k)
            .map(|j| squared_distance(next.row(j), centroids.row(j)).sqrt())
            .collect();
        centroids = next;

        let (top, top_idx, second) = top_two(&shifts);
        let use_cache = opts.reassignment == Reassignment::CachedDistance && !repaired;
        let mut changed = 0usize;
        for (i, r) in x.row_iter().enumerate() {
            let own = assignments[i];
            if use_cache {
                let d_own = squared_distance(r, centroids.row(own)).sqrt();
                let other_drift = if own == top_idx { second } else { top };
                let bound = closest[i] - other_drift;
                if d_own < bound - 1e-12 * (1.0 + bound.abs()) {
                    closest[i] = d_own;
                    continue;
                }
            }
            full_scans += 1;
            let (a, d2) = nearest(r, &centroids);
            if a != own {
                changed += 1;
            }
            assignments[i] = a;
            closest[i] = d2.sqrt();
        }
        wcss = closest.iter().map(|c| c * c).sum();
        trace.push(wcss);

        if changed == 0 || top < opts.tol {
            break;
        }
    }

    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        closest_dist: closest,
        wcss,
        iterations,
        seed: 0,
        wcss_trace: trace,
        full_scans,
    })
}

/// Largest value, its index, and the second largest value.
fn top_two(v: &[f64]) -> (f64, usize, f64) {
    let mut top = f64::NEG_INFINITY;
    let mut top_idx = 0;
    let mut second = f64::NEG_INFINITY;
    for (j, &s) in v.iter().enumerate() {
        if s > top {
            second = top;
            top = s;
            top_idx = j;
        } else if s > second {
            second = s;
        }
    }
    (top.max(0.0), top_idx, second.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub ks: Vec<usize>,
    pub wcss: Vec<f64>,
    pub chosen_k: usize,
}

/// Fits k-means for every k in `k_min..=k_max` and picks the knee.
///
/// When `k_min > 1` the curve also carries `k_min - 1` as the chord's left
/// anchor, so that `k_min` itself can be chosen; the anchor is never chosen.
pub fn elbow_select(x: &FeatureMatrix, k_min: usize, k_max: usize, opts: &KMeansOptions) -> Result<ElbowCurve> {
    if k_min < 1 || k_min >= k_max || k_max > x.n_rows() {
        return Err(Error::invalid(format!(
            "elbow range {k_min}..{k_max} needs 1 <= k_min < k_max <= {}",
            x.n_rows()
        )));
    }
    let first = if k_min > 1 { k_min - 1 } else { k_min };
    let ks: Vec<usize> = (first..=k_max).collect();
    let mut wcss = Vec::with_capacity(ks.len());
    for &k in &ks {
        let o = KMeansOptions { k, ..opts.clone() };
        wcss.push(kmeans_fit(x, &o)?.wcss);
    }
    let start = ks.iter().position(|&k| k == k_min).expect("k_min in range");
    let chosen = knee_index(&ks, &wcss, start);
    Ok(ElbowCurve {
        chosen_k: ks[chosen],
        ks,
        wcss,
    })
}

/// Index (at or after `start`) of the point farthest from the chord joining the
/// first and last points. Near-ties resolve to the smallest k.
pub fn knee_index(ks: &[usize], wcss: &[f64], start: usize) -> usize {
    let n = ks.len();
    let (x0, y0) = (ks[0] as f64, wcss[0]);
    let (x1, y1) = (ks[n - 1] as f64, wcss[n - 1]);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return start;
    }
    let scale = wcss.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut best = start;
    let mut best_d = f64::NEG_INFINITY;
    for i in start..n {
        let (x, y) = (ks[i] as f64, wcss[i]);
        let dist = (dy * (x - x0) - dx * (y - y0)).abs() / len;
        if dist > best_d + 1e-9 * scale {
            best_d = dist;
            best = i;
        }
    }
    best
}
