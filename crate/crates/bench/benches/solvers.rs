//! Sparse matvec, Lanczos top-k and the dense full-spectrum path at desk sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sparse_bbp::linalg::{count_eigs_in_interval, tridiagonalize_householder};
use sparse_bbp::*;

fn operator(n: usize, seed: u64) -> SpikedOperator {
    let l = (n as f64).ln();
    let params = ModelParams::new(n, 0.5, l * l / n as f64, vec![3.0]).with_seed(seed);
    let w = sample_sparse_wigner(&params, &mut derive_stream(seed, "wigner", 0)).unwrap();
    let v = sample_spike_ensemble(&params, &mut derive_stream(seed, "spike", 0)).unwrap();
    SpikedOperator::new(&params, w, v).unwrap()
}

fn matvec(c: &mut Criterion) {
    let mut g = c.benchmark_group("matvec");
    for n in [1000, 4000, 16000] {
        let op = operator(n, 1);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| op.apply(&x).unwrap()));
    }
    g.finish();
}

fn lanczos(c: &mut Criterion) {
    let mut g = c.benchmark_group("lanczos_top3");
    g.sample_size(10);
    for n in [1000, 4000] {
        let op = operator(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| lanczos_topk(&op, 3, 1e-10, 500, &mut derive_stream(2, "lanczos", 0)).unwrap())
        });
    }
    g.finish();
}

fn full_spectrum(c: &mut Criterion) {
    let mut g = c.benchmark_group("full_spectrum");
    g.sample_size(10);
    let n = 800;
    let dense = densify(&operator(n, 3)).unwrap();
    g.bench_function("householder_800", |b| b.iter(|| tridiagonalize_householder(&dense).unwrap()));
    let t = tridiagonalize_householder(&dense).unwrap();
    g.bench_function("sturm_count_800", |b| b.iter(|| count_eigs_in_interval(&t.diag, &t.off, -0.5, 0.5)));
    g.bench_function("bisection_all_800", |b| b.iter(|| t.eigenvalues()));
    g.finish();
}

criterion_group!(benches, matvec, lanczos, full_spectrum);
criterion_main!(benches);
