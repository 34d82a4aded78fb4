use std::path::PathBuf;

use clap::{Args, ValueEnum};

use gotalign_core::io::{write_embeddings, write_truth_csv, EmbeddingFormat};
use gotalign_core::synth::{generate, SynthConfig};

use crate::exit::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatFlag {
    Binary,
    Csv,
}

impl From<FormatFlag> for EmbeddingFormat {
    fn from(flag: FormatFlag) -> Self {
        match flag {
            FormatFlag::Binary => EmbeddingFormat::Binary,
            FormatFlag::Csv => EmbeddingFormat::Csv,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub n_patches: usize,
    /// Disease labels to generate; the eudermic label is appended on top.
    #[arg(long, default_value_t = 8)]
    pub n_labels: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Fraction of patches drawn as isotropic noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FormatFlag::Binary)]
    pub format: FormatFlag,
    #[arg(long, default_value = "patches.emb")]
    pub patches_out: PathBuf,
    #[arg(long, default_value = "labels.emb")]
    pub labels_out: PathBuf,
    /// Ground-truth CSV mapping each patch to its label or `noise`.
    #[arg(long, default_value = "truth.csv")]
    pub truth_out: PathBuf,
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    super::require_flag(
        args.n_patches >= 1 && args.n_labels >= 1 && args.dim >= 1,
        "--n-patches, --n-labels and --dim must all be at least 1",
    )?;
    super::require_flag(
        args.noise_frac.is_finite() && (0.0..=1.0).contains(&args.noise_frac),
        format!("--noise-frac must lie in [0, 1], got {}", args.noise_frac),
    )?;
    let cfg = SynthConfig {
        n_patches: args.n_patches,
        n_labels: args.n_labels,
        dim: args.dim,
        noise_frac: args.noise_frac,
        seed: args.seed,
    };
    let data = generate(&cfg)?;
    let format: EmbeddingFormat = args.format.into();
    write_embeddings(&data.patches, &args.patches_out, format)?;
    write_embeddings(&data.labels, &args.labels_out, format)?;
    write_truth_csv(&data.truth, &args.truth_out)?;
    Ok(())
}
