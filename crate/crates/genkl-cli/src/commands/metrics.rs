//! `genkl metrics`: score predicted NC flags against ground-truth flags.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use genkl::{confusion, f1, kappa, precision_recall_specificity, ConfusionCounts, MetricValue};
use serde::Serialize;

use crate::error::CliError;
use crate::io;

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Predicted flags: JSONL of {"id", "nc"}
    #[arg(long)]
    pub predicted: PathBuf,
    /// Ground-truth flags: JSONL of {"id", "nc"}
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct MetricsReport {
    predicted: String,
    truth: String,
    confusion: ConfusionCounts,
    precision: MetricValue,
    recall: MetricValue,
    specificity: MetricValue,
    f1: MetricValue,
    kappa: MetricValue,
}

pub fn run(args: &MetricsArgs) -> Result<(), CliError> {
    let predicted = io::read_flags(&args.predicted)?;
    let truth_lines = io::read_flags(&args.truth)?;
    let truth_by_id: HashMap<&str, bool> = truth_lines
        .iter()
        .map(|f| (f.id.as_str(), f.nc))
        .collect();
    if truth_by_id.len() != truth_lines.len() {
        return Err(CliError::input(&args.truth, None, "duplicate ids"));
    }
    if predicted.len() != truth_lines.len() {
        return Err(CliError::input(
            &args.predicted,
            None,
            format!(
                "{} predicted flags vs {} truth flags",
                predicted.len(),
                truth_lines.len()
            ),
        ));
    }

    let mut predicted_flags = Vec::with_capacity(predicted.len());
    let mut truth_flags = Vec::with_capacity(predicted.len());
    for flag in &predicted {
        let &truth = truth_by_id.get(flag.id.as_str()).ok_or_else(|| {
            CliError::input(
                &args.predicted,
                None,
                format!("id {} missing from the truth file", flag.id),
            )
        })?;
        predicted_flags.push(flag.nc);
        truth_flags.push(truth);
    }

    let counts =
        confusion(&predicted_flags, &truth_flags).map_err(|e| CliError::input(&args.predicted, None, e))?;
    let (precision, recall, specificity) = precision_recall_specificity(&counts);
    let report = MetricsReport {
        predicted: args.predicted.display().to_string(),
        truth: args.truth.display().to_string(),
        confusion: counts,
        precision,
        recall,
        specificity,
        f1: f1(&counts),
        kappa: kappa(&counts),
    };

    fs::create_dir_all(&args.out).map_err(|e| CliError::input(&args.out, None, e))?;
    io::write_json(&report, &args.out.join("metrics.json"))?;
    println!(
        "precision {:.4}  recall {:.4}  specificity {:.4}  f1 {:.4}  kappa {:.4}",
        report.precision.value,
        report.recall.value,
        report.specificity.value,
        report.f1.value,
        report.kappa.value
    );
    Ok(())
}
