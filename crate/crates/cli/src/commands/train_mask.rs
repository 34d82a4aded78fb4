use std::path::PathBuf;

use clap::Args;

use gotalign_core::io::{fmt_sig, write_trace_csv, write_weight_csv};
use gotalign_core::mask::{
    compute_mask, mask_training_objective, train_mask, MaskGenerator, MaskTrainConfig,
};
use gotalign_core::{GotConfig, SinkhornConfig};

use super::align::GradientModeFlag;
use super::load_embeddings;
use crate::exit::CliResult;

#[derive(Args, Debug)]
pub struct TrainMaskArgs {
    /// Source (patch) embedding file.
    #[arg(long)]
    pub source_emb: PathBuf,
    /// Target (label) embedding file.
    #[arg(long)]
    pub target_emb: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta_entropy: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 20)]
    pub outer_iterations: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Weight of the alignment loss; training descends beta_align times the
    /// masked objective.
    #[arg(long, default_value_t = 0.8)]
    pub beta_align: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GradientModeFlag::Unrolled)]
    pub gradient_mode: GradientModeFlag,
    #[arg(long, default_value = "mask.csv")]
    pub mask_out: PathBuf,
    /// Per-epoch objective CSV (`epoch,objective`).
    #[arg(long, default_value = "trace.csv")]
    pub trace_out: PathBuf,
}

pub fn run(args: &TrainMaskArgs) -> CliResult<()> {
    super::check_solver_flags(
        args.lambda,
        args.beta_entropy,
        args.tau,
        args.tolerance,
        args.max_iterations,
        args.outer_iterations,
    )?;
    super::require_flag(
        args.learning_rate.is_finite() && args.learning_rate >= 0.0,
        format!("--learning-rate must be nonnegative, got {}", args.learning_rate),
    )?;
    super::require_flag(
        args.beta_align.is_finite() && args.beta_align > 0.0,
        format!("--beta-align must be positive, got {}", args.beta_align),
    )?;
    let patches = load_embeddings(&args.source_emb)?;
    let labels = load_embeddings(&args.target_emb)?;
    let cfg = GotConfig {
        lambda_mix: args.lambda,
        sinkhorn: SinkhornConfig {
            entropy_weight: args.beta_entropy,
            max_iterations: args.max_iterations,
            tolerance: args.tolerance,
        },
        outer_iterations: args.outer_iterations,
    };
    // Descending beta_align * objective equals descending the objective
    // with the learning rate scaled by beta_align.
    let tcfg = MaskTrainConfig {
        learning_rate: args.learning_rate * args.beta_align,
        epochs: args.epochs,
        seed: args.seed,
        gradient_mode: args.gradient_mode.into(),
    };
    let init = MaskGenerator::random(patches.dim(), args.seed);
    let (trained, trace) = train_mask(&init, &patches, &labels, &cfg, args.tau, &tcfg)?;
    let mask = compute_mask(&trained, &patches)?;
    write_weight_csv(patches.ids(), mask.weights(), &args.mask_out)?;
    let weighted_trace: Vec<f64> = trace.iter().map(|f| args.beta_align * f).collect();
    write_trace_csv(&weighted_trace, &args.trace_out)?;
    let final_objective = mask_training_objective(&trained, &patches, &labels, &cfg, args.tau)?;
    println!("{}", fmt_sig(args.beta_align * final_objective, 12));
    Ok(())
}
