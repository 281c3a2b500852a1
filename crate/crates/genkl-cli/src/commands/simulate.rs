//! `genkl simulate`: one full deterministic run on synthetic data — config
//! echo, per-iteration reports, final model parameters, and plot-ready CSVs.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use genkl::{
    generate_synthetic, run_genkl, IterationReport, LinearSoftmaxModel, LossWeights, RunParams,
    SyntheticConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io;

/// The simulate config file: both sections optional, missing fields take
/// their defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub synthetic: SyntheticConfig,
    pub run: RunParams,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Config JSON: {"synthetic": {...}, "run": {...}}
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Override both the generator seed and the run seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the identification alpha
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override the identification beta
    #[arg(long)]
    pub beta: Option<f64>,
    /// Override the reference-set spread
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Override the reference-set size
    #[arg(long)]
    pub p_count: Option<usize>,
    /// Override the clean-loss weight
    #[arg(long)]
    pub omega1: Option<f64>,
    /// Override the non-NC-loss weight
    #[arg(long)]
    pub omega2: Option<f64>,
    /// Override the NC-loss weight
    #[arg(long)]
    pub omega3: Option<f64>,
}

/// Applies the command-line overrides on top of the loaded config.
pub fn apply_overrides(config: &mut SimulateConfig, args: &SimulateArgs) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        config.synthetic.seed = seed;
        config.run.seed = seed;
    }
    if let Some(alpha) = args.alpha {
        config.run.alpha = alpha;
    }
    if let Some(beta) = args.beta {
        config.run.beta = beta;
    }
    if let Some(sigma) = args.sigma {
        config.run.sigma = sigma;
    }
    if let Some(p_count) = args.p_count {
        config.run.p_count = p_count;
    }
    if args.omega1.is_some() || args.omega2.is_some() || args.omega3.is_some() {
        let w = &config.run.weights;
        config.run.weights = LossWeights::new(
            args.omega1.unwrap_or_else(|| w.omega1()),
            args.omega2.unwrap_or_else(|| w.omega2()),
            args.omega3.unwrap_or_else(|| w.omega3()),
        )
        .map_err(CliError::config)?;
    }
    Ok(())
}

/// Shape header for the flat-binary parameter file.
#[derive(Serialize)]
struct ModelHeader {
    k: usize,
    d: usize,
    dtype: &'static str,
    byte_order: &'static str,
    layout: &'static str,
    weights_len: usize,
    bias_len: usize,
}

/// Writes `model.json` (shape header) and `model.bin` (row-major weights
/// then bias, little-endian 64-bit reals).
pub fn write_model(model: &LinearSoftmaxModel, dir: &Path) -> Result<(), CliError> {
    io::write_json(
        &ModelHeader {
            k: model.k(),
            d: model.d(),
            dtype: "f64",
            byte_order: "little-endian",
            layout: "weights row-major [k][d], then bias [k]",
            weights_len: model.weights().len(),
            bias_len: model.bias().len(),
        },
        &dir.join("model.json"),
    )?;
    let bin_path = dir.join("model.bin");
    let mut bin = BufWriter::new(
        File::create(&bin_path).map_err(|e| CliError::input(&bin_path, None, e))?,
    );
    for &v in model.weights().iter().chain(model.bias()) {
        bin.write_all(&v.to_le_bytes())
            .map_err(|e| CliError::input(&bin_path, None, e))?;
    }
    bin.flush().map_err(|e| CliError::input(&bin_path, None, e))
}

fn write_loss_csv(reports: &[IterationReport], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::input(path, None, e))?;
    w.write_record(["iteration", "phase", "epoch", "loss"])
        .map_err(|e| CliError::input(path, None, e))?;
    for report in reports {
        for (phase, losses) in [
            ("train", &report.train_loss),
            ("fine_tune", &report.fine_tune_loss),
        ] {
            for (epoch, loss) in losses.iter().enumerate() {
                w.write_record([
                    report.t.to_string(),
                    phase.to_string(),
                    (epoch + 1).to_string(),
                    loss.to_string(),
                ])
                .map_err(|e| CliError::input(path, None, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::input(path, None, e))
}

fn write_nc_counts_csv(reports: &[IterationReport], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::input(path, None, e))?;
    w.write_record(["iteration", "nc_count"])
        .map_err(|e| CliError::input(path, None, e))?;
    for report in reports {
        w.write_record([report.t.to_string(), report.nc_count.to_string()])
            .map_err(|e| CliError::input(path, None, e))?;
    }
    w.flush().map_err(|e| CliError::input(path, None, e))
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let mut config: SimulateConfig = io::read_json(&args.config)?;
    apply_overrides(&mut config, args)?;

    let dataset = generate_synthetic(&config.synthetic).map_err(CliError::config)?;
    let (model, reports) = run_genkl(&dataset, &config.run).map_err(CliError::config)?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::input(&args.out, None, e))?;
    io::write_json(&config, &args.out.join("config.json"))?;
    io::write_json(&reports, &args.out.join("reports.json"))?;
    write_model(&model, &args.out)?;
    write_loss_csv(&reports, &args.out.join("loss.csv"))?;
    write_nc_counts_csv(&reports, &args.out.join("nc_counts.csv"))?;

    match reports.last() {
        Some(last) => println!(
            "{} iterations; final NC count {}; clean accuracy {:.4}",
            reports.len(),
            last.nc_count,
            last.clean_accuracy
        ),
        None => println!("pretrain only (num_iters = 0); wrote the pretrained model"),
    }
    Ok(())
}
