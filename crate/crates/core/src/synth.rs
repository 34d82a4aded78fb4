//! Deterministic synthetic alignment instances: well-separated label
//! directions, signal patches scattered around them, and isotropic noise
//! patches. Stands in for real image/text encoders so the alignment path is
//! testable end to end.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::EmbeddingSet;

/// Id of the designated healthy-skin label appended to every instance.
pub const EUDERMIC_LABEL: &str = "eudermic";

/// Truth-file marker for patches drawn from no label.
pub const NOISE_SOURCE: &str = "noise";

/// Maximum rejection-sampling draws before giving up on label separation.
pub const MAX_REJECTION_DRAWS: usize = 100_000;

/// Per-coordinate standard deviation of the signal-patch perturbation.
pub const SIGNAL_NOISE_SIGMA: f64 = 0.1;

/// Pairwise cosine bound enforced between label directions.
pub const LABEL_COSINE_BOUND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_patches: usize,
    /// Number of disease labels; the eudermic label is appended on top.
    pub n_labels: usize,
    pub dim: usize,
    /// Fraction of patches drawn as isotropic noise.
    pub noise_frac: f64,
    pub seed: u64,
}

/// A generated instance plus its ground truth.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub patches: EmbeddingSet,
    pub labels: EmbeddingSet,
    /// `(patch_id, source)` where source is a label id or [`NOISE_SOURCE`].
    pub truth: Vec<(String, String)>,
}

impl SynthData {
    /// Indices of patches whose source is [`NOISE_SOURCE`].
    pub fn noise_indices(&self) -> Vec<usize> {
        self.truth
            .iter()
            .enumerate()
            .filter(|(_, (_, s))| s == NOISE_SOURCE)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of patches generated from a label.
    pub fn signal_indices(&self) -> Vec<usize> {
        self.truth
            .iter()
            .enumerate()
            .filter(|(_, (_, s))| s != NOISE_SOURCE)
            .map(|(i, _)| i)
            .collect()
    }
}

fn unit_gaussian_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Rounds every coordinate to f32 precision so binary export round-trips
/// bit-exactly.
fn quantize(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

/// Generates a deterministic instance from `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.n_patches == 0 || cfg.n_labels == 0 || cfg.dim == 0 {
        return Err(Error::InvalidValue {
            context: "synthetic config",
            message: "n_patches, n_labels and dim must all be at least 1".into(),
        });
    }
    if !(0.0..=1.0).contains(&cfg.noise_frac) {
        return Err(Error::InvalidValue {
            context: "synthetic config",
            message: format!("noise_frac must lie in [0, 1], got {}", cfg.noise_frac),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Labels: rejection-sample unit directions with pairwise cosine below
    // the bound; the eudermic label is one more direction under the same
    // constraint.
    let total_labels = cfg.n_labels + 1;
    let mut label_vecs: Vec<Vec<f64>> = Vec::with_capacity(total_labels);
    let mut draws = 0usize;
    while label_vecs.len() < total_labels {
        if draws >= MAX_REJECTION_DRAWS {
            return Err(Error::RejectionSamplingFailed { attempts: draws });
        }
        let candidate = unit_gaussian_direction(&mut rng, cfg.dim);
        draws += 1;
        if label_vecs
            .iter()
            .all(|l| cosine(l, &candidate) < LABEL_COSINE_BOUND)
        {
            label_vecs.push(candidate);
        }
    }
    let mut label_ids: Vec<String> = (0..cfg.n_labels).map(|i| format!("label{i}")).collect();
    label_ids.push(EUDERMIC_LABEL.to_string());

    let n_noise = (cfg.n_patches as f64 * cfg.noise_frac).round() as usize;
    let n_noise = n_noise.min(cfg.n_patches);
    let n_signal = cfg.n_patches - n_noise;

    let mut patch_rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_patches);
    let mut truth: Vec<(String, String)> = Vec::with_capacity(cfg.n_patches);
    for i in 0..n_signal {
        let label_idx = rng.random_range(0..total_labels);
        let mut row = label_vecs[label_idx].clone();
        for x in row.iter_mut() {
            *x += SIGNAL_NOISE_SIGMA * rng.sample::<f64, _>(StandardNormal);
        }
        patch_rows.push(quantize(row));
        truth.push((format!("patch{i:04}"), label_ids[label_idx].clone()));
    }
    for i in n_signal..cfg.n_patches {
        patch_rows.push(quantize(unit_gaussian_direction(&mut rng, cfg.dim)));
        truth.push((format!("patch{i:04}"), NOISE_SOURCE.to_string()));
    }

    let patch_ids: Vec<String> = truth.iter().map(|(id, _)| id.clone()).collect();
    let patches = EmbeddingSet::new(
        patch_ids,
        rows_to_array(patch_rows, cfg.dim),
    )?;
    let labels = EmbeddingSet::new(
        label_ids,
        rows_to_array(label_vecs.into_iter().map(quantize).collect(), cfg.dim),
    )?;
    Ok(SynthData {
        patches,
        labels,
        truth,
    })
}

fn rows_to_array(rows: Vec<Vec<f64>>, dim: usize) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, dim), flat).expect("rows generated with uniform width")
}
