use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use gotalign_bench::random_records;
use gotalign_core::fairness::fairness_report;

fn bench_fairness_report(c: &mut Criterion) {
    let records = random_records(11, 10_000, 3, 8);
    c.bench_function("fairness_report_10k_records", |b| {
        b.iter(|| fairness_report(black_box(&records)).unwrap())
    });
}

criterion_group!(benches, bench_fairness_report);
criterion_main!(benches);
