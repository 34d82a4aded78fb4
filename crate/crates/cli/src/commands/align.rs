use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use gotalign_core::io::{fmt_sig, write_plan_csv, write_weight_csv};
use gotalign_core::mask::GradientMode;
use gotalign_core::{
    align_embeddings, AlignOutcome, AlignRequest, GotConfig, MaskMode, MaskTrainConfig,
    SinkhornConfig,
};

use super::{load_embeddings, marginal_from_weights, mask_from_file};
use crate::exit::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskFlag {
    None,
    File,
    Learn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradientModeFlag {
    Unrolled,
    FiniteDifference,
}

impl From<GradientModeFlag> for GradientMode {
    fn from(flag: GradientModeFlag) -> Self {
        match flag {
            GradientModeFlag::Unrolled => GradientMode::Unrolled,
            GradientModeFlag::FiniteDifference => GradientMode::FiniteDifference,
        }
    }
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Source (patch) embedding file, or a directory of files for batch mode.
    #[arg(long)]
    pub source_emb: PathBuf,
    /// Target (label) embedding file.
    #[arg(long)]
    pub target_emb: PathBuf,
    /// Mixing weight between node costs (1) and structural costs (0).
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Entropy weight of the Sinkhorn solver.
    #[arg(long, default_value_t = 0.1)]
    pub beta_entropy: f64,
    /// Cosine threshold for graph construction.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Linearization rounds of the alternating scheme.
    #[arg(long, default_value_t = 20)]
    pub outer_iterations: usize,
    /// Sinkhorn iteration cap.
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    /// Sinkhorn marginal tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Patch mask mode.
    #[arg(long, value_enum, default_value_t = MaskFlag::None)]
    pub mask: MaskFlag,
    /// Mask CSV (`id,weight`) used when `--mask file`.
    #[arg(long)]
    pub mask_file: Option<PathBuf>,
    /// Learning rate for `--mask learn`.
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Training epochs for `--mask learn`.
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Gradient mode for `--mask learn`.
    #[arg(long, value_enum, default_value_t = GradientModeFlag::Unrolled)]
    pub gradient_mode: GradientModeFlag,
    /// Seed for mask initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional source marginal weights CSV (`id,weight`).
    #[arg(long)]
    pub source_weights: Option<PathBuf>,
    /// Optional target marginal weights CSV (`id,weight`).
    #[arg(long)]
    pub target_weights: Option<PathBuf>,
    /// Transport plan output (single-file mode).
    #[arg(long, default_value = "plan.csv")]
    pub plan_out: PathBuf,
    /// Summary JSON output (single-file mode).
    #[arg(long, default_value = "summary.json")]
    pub summary_out: PathBuf,
    /// Mask CSV output when a mask is applied (single-file mode).
    #[arg(long, default_value = "mask.csv")]
    pub mask_out: PathBuf,
    /// Output directory for batch mode.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn sinkhorn_config(args: &AlignArgs) -> SinkhornConfig {
    SinkhornConfig {
        entropy_weight: args.beta_entropy,
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
    }
}

fn got_config(args: &AlignArgs) -> GotConfig {
    GotConfig {
        lambda_mix: args.lambda,
        sinkhorn: sinkhorn_config(args),
        outer_iterations: args.outer_iterations,
    }
}

fn write_summary(path: &Path, args: &AlignArgs, out: &AlignOutcome) -> CliResult<()> {
    let mut text = String::from("{\n");
    text.push_str(&format!("  \"objective\": {},\n", fmt_sig(out.objective, 12)));
    text.push_str(&format!("  \"wd_term\": {},\n", fmt_sig(out.wd_term, 12)));
    text.push_str(&format!("  \"gw_term\": {},\n", fmt_sig(out.gw_term, 12)));
    text.push_str(&format!("  \"lambda\": {},\n", fmt_sig(args.lambda, 12)));
    text.push_str(&format!(
        "  \"beta_entropy\": {},\n",
        fmt_sig(args.beta_entropy, 12)
    ));
    text.push_str(&format!("  \"iterations_used\": {}\n", out.iterations_used));
    text.push_str("}\n");
    fs::write(path, text)?;
    Ok(())
}

struct AlignJob {
    source: PathBuf,
    plan_out: PathBuf,
    summary_out: PathBuf,
    mask_out: PathBuf,
}

fn run_job(args: &AlignArgs, job: &AlignJob) -> CliResult<f64> {
    let patches = load_embeddings(&job.source)?;
    let labels = load_embeddings(&args.target_emb)?;
    let source_weights = args
        .source_weights
        .as_deref()
        .map(|p| marginal_from_weights(p, &patches, "source weights"))
        .transpose()?;
    let target_weights = args
        .target_weights
        .as_deref()
        .map(|p| marginal_from_weights(p, &labels, "target weights"))
        .transpose()?;
    let mask_mode = match args.mask {
        MaskFlag::None => MaskMode::None,
        MaskFlag::File => {
            let path = args.mask_file.as_deref().ok_or_else(|| {
                CliError::Usage("--mask file requires --mask-file <PATH>".to_string())
            })?;
            MaskMode::Fixed(mask_from_file(path, &patches)?)
        }
        MaskFlag::Learn => MaskMode::Learn(MaskTrainConfig {
            learning_rate: args.learning_rate,
            epochs: args.epochs,
            seed: args.seed,
            gradient_mode: args.gradient_mode.into(),
        }),
    };
    let request = AlignRequest {
        got: got_config(args),
        tau: args.tau,
        source_weights,
        target_weights,
        mask: mask_mode,
    };
    let outcome = align_embeddings(&patches, &labels, &request)?;
    write_plan_csv(
        &outcome.plan,
        patches.ids(),
        labels.ids(),
        &job.plan_out,
    )?;
    write_summary(&job.summary_out, args, &outcome)?;
    if let Some(mask) = &outcome.mask {
        write_weight_csv(patches.ids(), mask.weights(), &job.mask_out)?;
    }
    Ok(outcome.objective)
}

fn batch_jobs(args: &AlignArgs) -> CliResult<Vec<AlignJob>> {
    let mut sources: Vec<PathBuf> = fs::read_dir(&args.source_emb)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("emb") | Some("csv")
                )
        })
        .collect();
    sources.sort();
    if sources.is_empty() {
        return Err(CliError::Usage(format!(
            "no .emb or .csv files in {}",
            args.source_emb.display()
        )));
    }
    fs::create_dir_all(&args.out_dir)?;
    Ok(sources
        .into_iter()
        .map(|source| {
            let stem = source
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("item")
                .to_string();
            AlignJob {
                plan_out: args.out_dir.join(format!("{stem}.plan.csv")),
                summary_out: args.out_dir.join(format!("{stem}.summary.json")),
                mask_out: args.out_dir.join(format!("{stem}.mask.csv")),
                source,
            }
        })
        .collect())
}

pub fn run(args: &AlignArgs) -> CliResult<()> {
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
    if args.source_emb.is_dir() {
        let jobs = batch_jobs(args)?;
        // Jobs are independent; results print in input order.
        let objectives: Vec<CliResult<f64>> =
            jobs.par_iter().map(|job| run_job(args, job)).collect();
        for (job, result) in jobs.iter().zip(objectives) {
            let objective = result?;
            let name = job
                .source
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or("item");
            println!("{name}: {}", fmt_sig(objective, 12));
        }
    } else {
        let job = AlignJob {
            source: args.source_emb.clone(),
            plan_out: args.plan_out.clone(),
            summary_out: args.summary_out.clone(),
            mask_out: args.mask_out.clone(),
        };
        let objective = run_job(args, &job)?;
        println!("{}", fmt_sig(objective, 12));
    }
    Ok(())
}
