use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ofsulr_bench::blobs;
use ofsulr_core::classifiers::{logreg_fit, LogRegOptions, Solver};
use ofsulr_core::cluster::{kmeans_fit, Reassignment};
use ofsulr_core::pca::{center, covariance, eig_decompose};
use ofsulr_core::KMeansOptions;

fn kmeans(c: &mut Criterion) {
    let mut group = c.benchmark_group("kmeans");
    for n in [1_000, 10_000] {
        let (x, _) = blobs(n, 5, 6.0, 1);
        for (name, rule) in [("cached", Reassignment::CachedDistance), ("full", Reassignment::Full)] {
            let opts = KMeansOptions { reassignment: rule, ..KMeansOptions::new(2, 0) };
            group.bench_with_input(BenchmarkId::new(name, n), &x, |b, x| b.iter(|| kmeans_fit(black_box(x), &opts).unwrap()));
        }
    }
    group.finish();
}

fn jacobi(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobi");
    for d in [5, 20] {
        let (x, _) = blobs(500, d, 3.0, 2);
        let (centred, _) = center(&x);
        let s = covariance(&centred.values).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &s, |b, s| b.iter(|| eig_decompose(black_box(s)).unwrap()));
    }
    group.finish();
}

fn logreg(c: &mut Criterion) {
    let mut group = c.benchmark_group("logreg");
    let (x, y) = blobs(2_000, 5, 2.0, 3);
    for solver in [Solver::Gd, Solver::Newton] {
        let opts = LogRegOptions { solver, ..LogRegOptions::default() };
        group.bench_function(solver.to_string(), |b| b.iter(|| logreg_fit(black_box(&x.values), &y, &opts).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, kmeans, jacobi, logreg);
criterion_main!(benches);
