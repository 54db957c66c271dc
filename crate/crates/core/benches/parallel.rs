//! Sequential vs data-parallel kernels on the hot paths. Build with
//! `--no-default-features` to check that the sequential fallback alone
//! matches these numbers.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use mkssl_core::internal;

fn test_matrix(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut state = seed;
    DMatrix::from_fn(d, n, |_, _| {
        state = mkssl_core::util::splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
}

fn bench_pairwise(c: &mut Criterion) {
    let mut group = c.benchmark_group("pairwise_sq_dists");
    for &n in &[128usize, 512] {
        let x = test_matrix(64, n, 7);
        group.bench_with_input(BenchmarkId::new("seq", n), &x, |b, x| {
            b.iter(|| internal::pairwise_sq_dists_seq(x))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &x, |b, x| {
            b.iter(|| internal::pairwise_sq_dists_par(x))
        });
    }
    group.finish();
}

fn bench_cross(c: &mut Criterion) {
    let mut group = c.benchmark_group("cross_sq_dists");
    for &n in &[128usize, 512] {
        let a = test_matrix(64, n / 2, 11);
        let b_in = test_matrix(64, n, 13);
        group.bench_with_input(BenchmarkId::new("seq", n), &(&a, &b_in), |b, (a, bi)| {
            b.iter(|| internal::cross_sq_dists_seq(a, bi))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &(&a, &b_in), |b, (a, bi)| {
            b.iter(|| internal::cross_sq_dists_par(a, bi))
        });
    }
    group.finish();
}

fn bench_bank(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_bank");
    group.sample_size(20);
    let grid: Vec<f64> = (0..=10).map(|i| 2.0 + 0.1 * i as f64).collect();
    for &n in &[128usize, 256] {
        let x = test_matrix(64, n, 17);
        group.bench_with_input(BenchmarkId::new("seq", n), &x, |b, x| {
            b.iter(|| internal::build_bank_seq(x, &grid).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &x, |b, x| {
            b.iter(|| internal::build_bank_par(x, &grid).unwrap())
        });
    }
    group.finish();
}

fn bench_knn_graph(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_cross_view_graph");
    for &n in &[256usize, 1024] {
        let z = test_matrix(16, n, 23);
        let views: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        group.bench_with_input(BenchmarkId::new("seq", n), &(&z, &views), |b, (z, v)| {
            b.iter(|| internal::knn_cross_view_weights_seq(z, v, 2).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &(&z, &views), |b, (z, v)| {
            b.iter(|| internal::knn_cross_view_weights_par(z, v, 2).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_pairwise, bench_cross, bench_bank, bench_knn_graph);
criterion_main!(benches);
