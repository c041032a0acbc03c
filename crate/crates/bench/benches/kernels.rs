use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dmft_sgd::analytic::{linear_map, volterra_resolvent};
use dmft_sgd::dmft::{estimate_xi_kernels, McOptions};
use dmft_sgd::ThetaKernels;
use dmft_sgd_bench::{grid, linear_model, response_kernel};
use std::hint::black_box;

fn resolvent(c: &mut Criterion) {
    let mut g = c.benchmark_group("volterra_resolvent");
    for steps in [40, 80, 160] {
        let a = response_kernel(steps);
        g.bench_with_input(BenchmarkId::from_parameter(steps), &a, |b, a| {
            b.iter(|| volterra_resolvent(black_box(a)).unwrap())
        });
    }
    g.finish();
}

fn linear(c: &mut Criterion) {
    let spec = linear_model();
    let mut g = c.benchmark_group("linear_map");
    for steps in [40, 80] {
        let theta = ThetaKernels::free(&spec, grid(steps));
        g.bench_with_input(BenchmarkId::from_parameter(steps), &theta, |b, th| {
            b.iter(|| linear_map(black_box(th), &spec).unwrap())
        });
    }
    g.finish();
}

fn xi_sampling(c: &mut Criterion) {
    let spec = linear_model();
    let theta = ThetaKernels::free(&spec, grid(40));
    let opts = McOptions { n_samples: 2000, seed: 1, index_offset: 0, rf_window: None };
    let mut g = c.benchmark_group("xi_kernels_mc");
    g.sample_size(10);
    g.bench_function("n40_samples2000", |b| b.iter(|| estimate_xi_kernels(&spec, black_box(&theta), &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, resolvent, linear, xi_sampling);
criterion_main!(benches);
