//! Cross-domain alignment between embedding sets by fused graph optimal
//! transport, with a learnable per-patch mask and group fairness metrics
//! over prediction records.
//!
//! The crate is organized around:
//! - [`ot`]: entropic Sinkhorn, Gromov-Wasserstein, the fused distance, and
//!   a brute-force oracle;
//! - [`graph`]: thresholded cosine graphs and cross-domain costs;
//! - [`mask`]: the sigmoid mask generator, masked Sinkhorn, and gradient
//!   training of the mask;
//! - [`losses`]: cross-entropy, confusion loss, and the weighted total;
//! - [`fairness`]: PQD / DPM / EOM over prediction records;
//! - [`io`]: the binary and CSV file formats;
//! - [`synth`]: deterministic synthetic instances;
//! - [`align`]: the end-to-end pipeline a CLI or service drives.

pub mod align;
pub mod error;
pub mod fairness;
pub mod graph;
pub mod io;
pub mod losses;
pub mod mask;
pub mod ot;
pub mod synth;

pub use align::{align_embeddings, AlignOutcome, AlignRequest, MaskMode};
pub use error::{Error, Result};
pub use fairness::{fairness_report, FairnessReport, PredictionRecord};
pub use graph::{build_graph, cosine_similarity_matrix, cross_cost_matrix, EmbeddingSet, GraphRep};
pub use losses::{confusion_loss, cross_entropy, total_loss, LossWeights, ProbabilityVector};
pub use mask::{
    compute_mask, mask_loss_gradient, masked_sinkhorn, mgot_distance, train_mask, GradientMode,
    MaskGenerator, MaskTrainConfig, MaskVector,
};
pub use ot::{
    exact_ot_oracle, got_distance, gromov_wasserstein, gw_linearized_cost, sinkhorn,
    transport_cost, CostMatrix, GotConfig, MarginalDistribution, SinkhornConfig, TransportPlan,
};
pub use synth::{SynthConfig, SynthData};
