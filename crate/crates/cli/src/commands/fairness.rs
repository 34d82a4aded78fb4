use std::path::PathBuf;

use clap::Args;

use gotalign_core::fairness::fairness_report;
use gotalign_core::io::{read_predictions, write_report};

use crate::exit::CliResult;

#[derive(Args, Debug)]
pub struct FairnessArgs {
    /// Prediction CSV with header `sample_id,group,true_label,pred_label`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Fairness report JSON output.
    #[arg(long, default_value = "report.json")]
    pub report_out: PathBuf,
}

pub fn run(args: &FairnessArgs) -> CliResult<()> {
    let records = read_predictions(&args.predictions)?;
    let report = fairness_report(&records)?;
    write_report(&report, &args.report_out)?;
    println!("pqd={:.6}", report.pqd);
    println!("dpm={:.6}", report.dpm);
    println!("eom={:.6}", report.eom);
    Ok(())
}
