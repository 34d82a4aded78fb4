use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use gotalign_bench::{random_cost, random_embeddings, random_intra};
use gotalign_core::mask::{mask_loss_gradient, GradientMode, MaskGenerator};
use gotalign_core::ot::{
    got_distance, gw_linearized_cost, sinkhorn, GotConfig, MarginalDistribution, SinkhornConfig,
    TransportPlan,
};
use ndarray::Array2;

fn bench_sinkhorn(c: &mut Criterion) {
    let cost = random_cost(1, 64, 64);
    let u = MarginalDistribution::uniform(64);
    let cfg = SinkhornConfig {
        entropy_weight: 0.1,
        max_iterations: 10_000,
        tolerance: 1e-9,
    };
    c.bench_function("sinkhorn_64x64_beta0.1", |b| {
        b.iter(|| sinkhorn(black_box(&cost), &u, &u, &cfg).unwrap())
    });

    let log_cfg = SinkhornConfig {
        entropy_weight: 0.01,
        max_iterations: 100_000,
        tolerance: 1e-6,
    };
    c.bench_function("sinkhorn_64x64_beta0.01_logdomain", |b| {
        b.iter(|| sinkhorn(black_box(&cost), &u, &u, &log_cfg).unwrap())
    });
}

fn bench_gw_linearization(c: &mut Criterion) {
    let a = random_intra(2, 32);
    let b_mat = random_intra(3, 32);
    let u = MarginalDistribution::uniform(32);
    let uniform = TransportPlan::checked(
        Array2::from_elem((32, 32), 1.0 / 1024.0),
        u.clone(),
        u.clone(),
    )
    .unwrap();
    c.bench_function("gw_linearized_cost_32", |b| {
        b.iter(|| gw_linearized_cost(black_box(&a), black_box(&b_mat), &uniform).unwrap())
    });
}

fn bench_got(c: &mut Criterion) {
    let cross = random_cost(4, 32, 8);
    let a = random_intra(5, 32);
    let b_mat = random_intra(6, 8);
    let u = MarginalDistribution::uniform(32);
    let v = MarginalDistribution::uniform(8);
    let cfg = GotConfig {
        lambda_mix: 0.5,
        sinkhorn: SinkhornConfig {
            entropy_weight: 0.1,
            max_iterations: 10_000,
            tolerance: 1e-9,
        },
        outer_iterations: 10,
    };
    c.bench_function("got_distance_32x8", |b| {
        b.iter(|| got_distance(black_box(&cross), &a, &b_mat, &u, &v, &cfg).unwrap())
    });
}

fn bench_mask_gradient(c: &mut Criterion) {
    let patches = random_embeddings(7, "p", 32, 8);
    let labels = random_embeddings(8, "l", 6, 8);
    let gen = MaskGenerator::random(8, 9);
    let cfg = GotConfig {
        outer_iterations: 5,
        ..GotConfig::default()
    };
    c.bench_function("mask_gradient_unrolled_32x6", |b| {
        b.iter(|| {
            mask_loss_gradient(
                black_box(&gen),
                &patches,
                &labels,
                &cfg,
                0.1,
                GradientMode::Unrolled,
            )
            .unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_sinkhorn,
    bench_gw_linearization,
    bench_got,
    bench_mask_gradient
);
criterion_main!(benches);
