//! Fixtures shared by the benchmarks.

use ofsulr_core::pipeline::generate_synthetic;
use ofsulr_core::preprocess::{encode, EncodingPolicy};
use ofsulr_core::FeatureMatrix;

/// Two Gaussian blobs `separation` apart, encoded as a feature matrix, with
/// the generating cluster of every row.
pub fn blobs(n: usize, d: usize, separation: f64, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let (table, truth) = generate_synthetic(n, d, 2, separation, seed).expect("valid generator arguments");
    let x = encode(&table, EncodingPolicy::Label).expect("numeric table encodes");
    (x, truth)
}
