//! High-level alignment pipeline: graphs and costs from two embedding sets,
//! then plain, file-masked, or learned-mask transport, with the objective
//! decomposition a front end needs for reporting.

use crate::error::{Error, Result};
use crate::graph::{build_graph, cross_cost_matrix, EmbeddingSet};
use crate::mask::{
    compute_mask, masked_coupling_objective, mgot_outcome_with_mask, train_mask_with_marginals,
    MaskGenerator, MaskTrainConfig, MaskVector,
};
use crate::ot::{
    fused_alternation, sinkhorn_with_iterations, CostMatrix, GotConfig, MarginalDistribution,
    SinkhornConfig, TransportPlan,
};

/// How the source patches are weighted during alignment.
#[derive(Debug, Clone)]
pub enum MaskMode {
    /// Plain fused transport.
    None,
    /// A fixed mask supplied by the caller (one weight per patch).
    Fixed(MaskVector),
    /// Train a fresh sigmoid generator, then align with its mask.
    Learn(MaskTrainConfig),
}

/// One alignment job.
#[derive(Debug, Clone)]
pub struct AlignRequest {
    pub got: GotConfig,
    pub tau: f64,
    /// Source marginal; uniform when absent.
    pub source_weights: Option<MarginalDistribution>,
    /// Target marginal; uniform when absent.
    pub target_weights: Option<MarginalDistribution>,
    pub mask: MaskMode,
}

impl Default for AlignRequest {
    fn default() -> Self {
        Self {
            got: GotConfig::default(),
            tau: 0.1,
            source_weights: None,
            target_weights: None,
            mask: MaskMode::None,
        }
    }
}

/// Everything a front end reports about one alignment.
#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub plan: TransportPlan,
    pub objective: f64,
    /// Node-cost term of the objective (unweighted).
    pub wd_term: f64,
    /// Structural term of the objective (unweighted).
    pub gw_term: f64,
    /// Total Sinkhorn iterations spent across all linearization rounds.
    pub iterations_used: usize,
    /// Present when a mask was applied or learned.
    pub mask: Option<MaskVector>,
    /// Per-epoch training objective; empty unless the mask was learned.
    pub training_trace: Vec<f64>,
}

fn resolve_marginal(
    weights: &Option<MarginalDistribution>,
    len: usize,
    side: &'static str,
) -> Result<MarginalDistribution> {
    match weights {
        Some(m) => {
            if m.len() != len {
                return Err(Error::DimensionMismatch {
                    context: side,
                    expected: format!("{len}"),
                    got: format!("{}", m.len()),
                });
            }
            Ok(m.clone())
        }
        None => Ok(MarginalDistribution::uniform(len)),
    }
}

/// Aligns `patches` to `labels` per the request.
pub fn align_embeddings(
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    req: &AlignRequest,
) -> Result<AlignOutcome> {
    let u = resolve_marginal(&req.source_weights, patches.len(), "source weights")?;
    let v = resolve_marginal(&req.target_weights, labels.len(), "target weights")?;
    match &req.mask {
        MaskMode::None => {
            let cross = cross_cost_matrix(patches, labels)?;
            let intra_a = build_graph(patches, req.tau)?.intra_cost();
            let intra_b = build_graph(labels, req.tau)?.intra_cost();
            let solver = |cost: &CostMatrix,
                          u: &MarginalDistribution,
                          v: &MarginalDistribution,
                          cfg: &SinkhornConfig|
             -> Result<(TransportPlan, usize)> {
                sinkhorn_with_iterations(cost, u, v, cfg)
            };
            let out = fused_alternation(
                Some(&cross),
                Some((&intra_a, &intra_b)),
                &u,
                &v,
                &req.got,
                &solver,
            )?;
            Ok(AlignOutcome {
                plan: out.plan,
                objective: out.objective,
                wd_term: out.wd_term,
                gw_term: out.gw_term,
                iterations_used: out.inner_iterations,
                mask: None,
                training_trace: Vec::new(),
            })
        }
        MaskMode::Fixed(mask) => {
            let out =
                mgot_outcome_with_mask(patches, labels, mask.clone(), &u, &v, &req.got, req.tau)?;
            Ok(AlignOutcome {
                plan: out.plan,
                objective: out.objective,
                wd_term: out.wd_term,
                gw_term: out.gw_term,
                iterations_used: out.inner_iterations,
                mask: Some(out.mask),
                training_trace: Vec::new(),
            })
        }
        MaskMode::Learn(tcfg) => {
            let init = MaskGenerator::random(patches.dim(), tcfg.seed);
            let (trained, trace) = train_mask_with_marginals(
                &init,
                patches,
                labels,
                Some((&u, &v)),
                &req.got,
                req.tau,
                tcfg,
            )?;
            let mask = compute_mask(&trained, patches)?;
            let out =
                mgot_outcome_with_mask(patches, labels, mask, &u, &v, &req.got, req.tau)?;
            Ok(AlignOutcome {
                plan: out.plan,
                objective: out.objective,
                wd_term: out.wd_term,
                gw_term: out.gw_term,
                iterations_used: out.inner_iterations,
                mask: Some(out.mask),
                training_trace: trace,
            })
        }
    }
}

/// Evaluates the fused objective decomposition at an existing plan with an
/// optional mask; used for cross-checks.
pub fn evaluate_objective(
    plan: &TransportPlan,
    patches: &EmbeddingSet,
    labels: &EmbeddingSet,
    mask: Option<&MaskVector>,
    got: &GotConfig,
    tau: f64,
) -> Result<(f64, f64, f64)> {
    let cross = cross_cost_matrix(patches, labels)?;
    let intra_a = build_graph(patches, tau)?.intra_cost();
    let intra_b = build_graph(labels, tau)?.intra_cost();
    let ones;
    let mask_weights = match mask {
        Some(m) => m.weights(),
        None => {
            ones = vec![1.0; patches.len()];
            &ones
        }
    };
    Ok(masked_coupling_objective(
        plan.values(),
        mask_weights,
        cross.values(),
        intra_a.values(),
        intra_b.values(),
        got.lambda_mix,
    ))
}
