use aojc_bench::{four_users, n_users};
use aojc_core::optimizer::{build_max_age_table, optimize_randomized_subset, OptimizerSettings};
use aojc_core::SubsetKey;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn subset_solve(c: &mut Criterion) {
    let settings = OptimizerSettings::default();
    let mut g = c.benchmark_group("randomized_subset");
    g.sample_size(20);
    for n in [1, 2, 4, 6] {
        let params = n_users(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &params, |b, p| {
            b.iter(|| black_box(optimize_randomized_subset(p, SubsetKey::full(n), &settings).unwrap()))
        });
    }
    g.finish();
}

fn full_table(c: &mut Criterion) {
    let params = four_users(0.5);
    let settings = OptimizerSettings::default();
    let mut g = c.benchmark_group("table");
    g.sample_size(10);
    g.bench_function("max_age_4_users", |b| b.iter(|| black_box(build_max_age_table(&params, &settings).unwrap())));
    g.finish();
}

criterion_group!(benches, subset_solve, full_table);
criterion_main!(benches);
