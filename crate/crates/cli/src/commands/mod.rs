pub mod align;
pub mod fairness;
pub mod synth;
pub mod train_mask;

use std::collections::HashMap;
use std::path::Path;

use gotalign_core::graph::EmbeddingSet;
use gotalign_core::io::{read_embeddings, read_weight_csv, EmbeddingFormat};
use gotalign_core::{Error as CoreError, MarginalDistribution, MaskVector};

use crate::exit::{CliError, CliResult};

pub(crate) fn load_embeddings(path: &Path) -> CliResult<EmbeddingSet> {
    Ok(read_embeddings(path, EmbeddingFormat::from_path(path))?)
}

/// Flag-range violations are usage errors, not data errors.
pub(crate) fn require_flag(ok: bool, message: impl Into<String>) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(message.into()))
    }
}

pub(crate) fn check_solver_flags(
    lambda: f64,
    beta_entropy: f64,
    tau: f64,
    tolerance: f64,
    max_iterations: usize,
    outer_iterations: usize,
) -> CliResult<()> {
    require_flag(
        lambda.is_finite() && (0.0..=1.0).contains(&lambda),
        format!("--lambda must lie in [0, 1], got {lambda}"),
    )?;
    require_flag(
        beta_entropy.is_finite() && beta_entropy > 0.0,
        format!("--beta-entropy must be positive, got {beta_entropy}"),
    )?;
    require_flag(
        tau.is_finite() && (-1.0..=1.0).contains(&tau),
        format!("--tau must lie in [-1, 1], got {tau}"),
    )?;
    require_flag(
        tolerance.is_finite() && tolerance > 0.0,
        format!("--tolerance must be positive, got {tolerance}"),
    )?;
    require_flag(
        max_iterations >= 1,
        "--max-iterations must be at least 1".to_string(),
    )?;
    require_flag(
        outer_iterations >= 1,
        "--outer-iterations must be at least 1".to_string(),
    )?;
    Ok(())
}

/// Maps an `id,weight` file onto the embedding order; every embedding id
/// must be covered and no extras are allowed.
pub(crate) fn weights_in_embedding_order(
    path: &Path,
    embeddings: &EmbeddingSet,
    context: &str,
) -> CliResult<Vec<f64>> {
    let rows = read_weight_csv(path)?;
    if rows.len() != embeddings.len() {
        return Err(CliError::Core(CoreError::InvalidValue {
            context: "weight file",
            message: format!(
                "{context}: {} rows for {} embeddings",
                rows.len(),
                embeddings.len()
            ),
        }));
    }
    let by_id: HashMap<&str, f64> = rows.iter().map(|(id, w)| (id.as_str(), *w)).collect();
    embeddings
        .ids()
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                CliError::Core(CoreError::InvalidValue {
                    context: "weight file",
                    message: format!("{context}: no weight for id {id:?}"),
                })
            })
        })
        .collect()
}

pub(crate) fn marginal_from_weights(
    path: &Path,
    embeddings: &EmbeddingSet,
    context: &str,
) -> CliResult<MarginalDistribution> {
    let weights = weights_in_embedding_order(path, embeddings, context)?;
    Ok(MarginalDistribution::from_unnormalized(&weights)?)
}

pub(crate) fn mask_from_file(path: &Path, embeddings: &EmbeddingSet) -> CliResult<MaskVector> {
    let weights = weights_in_embedding_order(path, embeddings, "mask file")?;
    Ok(MaskVector::new(weights)?)
}
