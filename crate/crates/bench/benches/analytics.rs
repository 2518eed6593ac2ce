use aojc_bench::four_users;
use aojc_core::analytics::{closed_form_report, MaxAgeOptions, Subsystem};
use aojc_core::stability::weighted_service_check;
use aojc_core::{AdaptivePolicy, SchedulerKind, SubsetKey};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn closed_forms(c: &mut Criterion) {
    let params = four_users(0.3);
    let key = SubsetKey::full(4);
    let randomized = Subsystem::randomized(&params, key, 0.7, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    let max_age = Subsystem::max_age(&params, key, 0.7).unwrap();
    let opts = MaxAgeOptions::default();
    c.bench_function("report_randomized_4", |b| b.iter(|| black_box(closed_form_report(&randomized, opts).unwrap())));
    c.bench_function("report_max_age_4", |b| b.iter(|| black_box(closed_form_report(&max_age, opts).unwrap())));
}

fn stability_margins(c: &mut Criterion) {
    let params = four_users(0.3);
    let policy = AdaptivePolicy::uniform(4, SchedulerKind::AdaptiveRandomized, 0.6).unwrap();
    c.bench_function("weighted_service_check_4", |b| {
        b.iter(|| black_box(weighted_service_check(&params, &policy, 0.01).unwrap()))
    });
}

criterion_group!(benches, closed_forms, stability_margins);
criterion_main!(benches);
