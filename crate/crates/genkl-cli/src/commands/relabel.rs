//! `genkl relabel`: turn a partition into soft labels — uniform for NC
//! records, double-hot for non-NC records.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use genkl::{
    assign_soft_labels, normalized_class_ratios, DatasetManifest, PartitionReport, RelabelError,
};
use serde::Serialize;

use crate::error::CliError;
use crate::io;

#[derive(Debug, Args)]
pub struct RelabelArgs {
    /// NC partition file (as written by `identify`)
    #[arg(long)]
    pub nc: PathBuf,
    /// Non-NC partition file (as written by `identify`)
    #[arg(long)]
    pub non_nc: PathBuf,
    /// Dataset manifest JSON: {"k", "class_sizes", "role"}
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Emit the normalized double-hot variant for non-NC records
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Serialize)]
struct RelabelConfig {
    nc: String,
    non_nc: String,
    manifest: DatasetManifest,
    normalize: bool,
    nc_count: usize,
    non_nc_count: usize,
}

pub fn run(args: &RelabelArgs) -> Result<(), CliError> {
    let manifest: DatasetManifest = io::read_json(&args.manifest)?;
    let (mut records, mut decisions) = io::read_partition(&args.nc)?;
    for (i, d) in decisions.iter().enumerate() {
        if !d.is_nc {
            return Err(CliError::input(
                &args.nc,
                Some(i + 1),
                format!("record {} is flagged non-NC in the NC partition", d.id),
            ));
        }
    }
    let (non_nc_records, non_nc_decisions) = io::read_partition(&args.non_nc)?;
    for (i, d) in non_nc_decisions.iter().enumerate() {
        if d.is_nc {
            return Err(CliError::input(
                &args.non_nc,
                Some(i + 1),
                format!("record {} is flagged NC in the non-NC partition", d.id),
            ));
        }
    }
    let nc_count = decisions.len();
    let non_nc_count = non_nc_decisions.len();
    records.extend(non_nc_records);
    decisions.extend(non_nc_decisions);

    for record in &records {
        if record.k() != manifest.k() {
            return Err(CliError::input(
                &args.manifest,
                None,
                format!(
                    "manifest has k = {} but record {} has {} classes",
                    manifest.k(),
                    record.id(),
                    record.k()
                ),
            ));
        }
    }

    let report = PartitionReport {
        decisions,
        nc_count,
        non_nc_count,
        uniform_like: None,
    };
    let ratios = normalized_class_ratios(manifest.class_sizes())
        .map_err(CliError::config)?;
    let labels = assign_soft_labels(&report, &records, &ratios, args.normalize).map_err(
        |e| match e {
            RelabelError::IdMismatch { .. } => CliError::input(&args.nc, None, e),
            other => CliError::config(other),
        },
    )?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::input(&args.out, None, e))?;
    io::write_soft_labels(&labels, &args.out.join("soft_labels.jsonl"))?;
    io::write_json(
        &RelabelConfig {
            nc: args.nc.display().to_string(),
            non_nc: args.non_nc.display().to_string(),
            manifest,
            normalize: args.normalize,
            nc_count,
            non_nc_count,
        },
        &args.out.join("config.json"),
    )?;
    println!(
        "wrote {} soft labels ({} uniform, {} double-hot)",
        labels.len(),
        nc_count,
        non_nc_count
    );
    Ok(())
}
