//! Seeded instance builders shared by the benchmarks.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use gotalign_core::fairness::PredictionRecord;
use gotalign_core::graph::{embedding_set_from_rows, EmbeddingSet};
use gotalign_core::ot::CostMatrix;

pub fn random_cost(seed: u64, n: usize, m: usize) -> CostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CostMatrix::new(Array2::from_shape_fn((n, m), |_| rng.random::<f64>())).unwrap()
}

pub fn random_intra(seed: u64, n: usize) -> CostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let w = rng.random::<f64>();
            values[(i, j)] = w;
            values[(j, i)] = w;
        }
    }
    CostMatrix::new(values).unwrap()
}

pub fn random_embeddings(seed: u64, prefix: &str, n: usize, d: usize) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = (0..n).map(|i| format!("{prefix}{i}")).collect();
    let rows = (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 0.95).collect())
        .collect();
    embedding_set_from_rows(ids, rows).unwrap()
}

pub fn random_records(seed: u64, n: usize, groups: usize, classes: usize) -> Vec<PredictionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let group = format!("g{}", rng.random_range(0..groups));
            let truth = format!("c{}", rng.random_range(0..classes));
            let pred = if rng.random::<f64>() < 0.7 {
                truth.clone()
            } else {
                format!("c{}", rng.random_range(0..classes))
            };
            PredictionRecord::new(format!("s{i}"), group, truth, pred).unwrap()
        })
        .collect()
}
