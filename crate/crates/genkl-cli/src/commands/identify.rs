//! `genkl identify`: partition prediction records into NC and non-NC.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use genkl::{
    partition, IdentifierConfig, IdentifyError, LogBase, UniformLikeSet, DEFAULT_IDENTIFY_ALPHA,
    DEFAULT_IDENTIFY_BETA, DEFAULT_IDENTIFY_P_COUNT, DEFAULT_IDENTIFY_SIGMA,
};
use serde::Serialize;

use crate::commands::BaseArg;
use crate::error::CliError;
use crate::io;

/// Default decision thresholds for the baseline rules, tuned once on the
/// default synthetic benchmark (the values the comparison suite uses).
pub const DEFAULT_TAU_NORMALIZED_ENTROPY: f64 = 0.692;
pub const DEFAULT_TAU_KL: f64 = 2.12;
pub const DEFAULT_TAU_MSE: f64 = 0.00004;
pub const DEFAULT_TAU_DELTA: f64 = 0.362;
pub const DEFAULT_TAU_DC_KL: f64 = 0.43;
pub const DEFAULT_TAU_CLEAN: f64 = 0.35;
pub const DEFAULT_TAU_OOD: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.37;
pub const DEFAULT_DELTA: f64 = 0.0;
pub const DEFAULT_Z: f64 = 1.0;

/// Which decision rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Method {
    #[default]
    GenKl,
    NormalizedEntropy,
    Kl,
    Mse,
    Delta,
    DcKl,
    JoSrc,
    DsosGate,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::GenKl => "gen-kl",
            Method::NormalizedEntropy => "normalized-entropy",
            Method::Kl => "kl",
            Method::Mse => "mse",
            Method::Delta => "delta",
            Method::DcKl => "dc-kl",
            Method::JoSrc => "jo-src",
            Method::DsosGate => "dsos-gate",
        }
    }
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Input records: JSONL, or CSV when the extension is .csv
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Decision rule
    #[arg(long, value_enum, default_value_t = Method::GenKl)]
    pub method: Method,
    /// Logarithm base for all divergences
    #[arg(long, value_enum, default_value_t = BaseArg::Two)]
    pub base: BaseArg,
    /// Entropy discount (gen-kl)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Dominance-threshold offset (gen-kl)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Spread of the uniform-like reference set (gen-kl)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Size of the uniform-like reference set (gen-kl)
    #[arg(long)]
    pub p_count: Option<usize>,
    /// Seed for sampling the reference set (gen-kl)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Do not place the exact uniform vector in the reference set (gen-kl)
    #[arg(long)]
    pub skip_exact_uniform: bool,
    /// Decision threshold (normalized-entropy, kl, mse, delta, dc-kl)
    #[arg(long)]
    pub tau: Option<f64>,
    /// Clean-set threshold (jo-src)
    #[arg(long)]
    pub tau_clean: Option<f64>,
    /// OOD threshold on the two-view mean entropy (jo-src)
    #[arg(long)]
    pub tau_ood: Option<f64>,
    /// Treat low divergence-to-label as clean instead of high (jo-src)
    #[arg(long)]
    pub invert_clean_condition: bool,
    /// Trusted-fraction parameter (dsos-gate)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Entropy-gate offset (dsos-gate)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Entropy-gate scale (dsos-gate)
    #[arg(long)]
    pub z: Option<f64>,
}

/// What `summary.json` contains: the effective configuration and counts.
#[derive(Serialize)]
struct Summary<'a> {
    input: String,
    base: &'a str,
    config: &'a IdentifierConfig,
    nc_count: usize,
    non_nc_count: usize,
    total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    uniform_like: Option<&'a UniformLikeSet>,
}

/// Rejects flags that the selected method would silently ignore.
fn check_unused(args: &IdentifyArgs) -> Result<(), CliError> {
    let mut unused: Vec<&str> = Vec::new();
    let genkl_like = matches!(args.method, Method::GenKl);
    let threshold_like = matches!(
        args.method,
        Method::NormalizedEntropy | Method::Kl | Method::Mse | Method::Delta | Method::DcKl
    );
    let josrc = matches!(args.method, Method::JoSrc);
    let dsos = matches!(args.method, Method::DsosGate);

    if !genkl_like {
        if args.alpha.is_some() {
            unused.push("--alpha");
        }
        if args.beta.is_some() {
            unused.push("--beta");
        }
        if args.sigma.is_some() {
            unused.push("--sigma");
        }
        if args.p_count.is_some() {
            unused.push("--p-count");
        }
        if args.seed.is_some() {
            unused.push("--seed");
        }
        if args.skip_exact_uniform {
            unused.push("--skip-exact-uniform");
        }
    }
    if !threshold_like && args.tau.is_some() {
        unused.push("--tau");
    }
    if !josrc {
        if args.tau_clean.is_some() {
            unused.push("--tau-clean");
        }
        if args.tau_ood.is_some() {
            unused.push("--tau-ood");
        }
        if args.invert_clean_condition {
            unused.push("--invert-clean-condition");
        }
    }
    if !dsos {
        if args.gamma.is_some() {
            unused.push("--gamma");
        }
        if args.delta.is_some() {
            unused.push("--delta");
        }
        if args.z.is_some() {
            unused.push("--z");
        }
    }
    if unused.is_empty() {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "{} not used by method {}",
            unused.join(", "),
            args.method.name()
        )))
    }
}

fn effective_config(args: &IdentifyArgs) -> Result<IdentifierConfig, CliError> {
    check_unused(args)?;
    Ok(match args.method {
        Method::GenKl => IdentifierConfig::GenKl {
            alpha: args.alpha.unwrap_or(DEFAULT_IDENTIFY_ALPHA),
            beta: args.beta.unwrap_or(DEFAULT_IDENTIFY_BETA),
            sigma: args.sigma.unwrap_or(DEFAULT_IDENTIFY_SIGMA),
            p_count: args.p_count.unwrap_or(DEFAULT_IDENTIFY_P_COUNT),
            p_seed: args.seed.unwrap_or(0),
            include_exact_uniform: !args.skip_exact_uniform,
        },
        Method::NormalizedEntropy => IdentifierConfig::NormalizedEntropy {
            tau: args.tau.unwrap_or(DEFAULT_TAU_NORMALIZED_ENTROPY),
        },
        Method::Kl => IdentifierConfig::Kl {
            tau: args.tau.unwrap_or(DEFAULT_TAU_KL),
        },
        Method::Mse => IdentifierConfig::Mse {
            tau: args.tau.unwrap_or(DEFAULT_TAU_MSE),
        },
        Method::Delta => IdentifierConfig::Delta {
            tau: args.tau.unwrap_or(DEFAULT_TAU_DELTA),
        },
        Method::DcKl => IdentifierConfig::DcKl {
            tau: args.tau.unwrap_or(DEFAULT_TAU_DC_KL),
        },
        Method::JoSrc => IdentifierConfig::JoSrc {
            tau_clean: args.tau_clean.unwrap_or(DEFAULT_TAU_CLEAN),
            tau_ood: args.tau_ood.unwrap_or(DEFAULT_TAU_OOD),
            invert_clean_condition: args.invert_clean_condition,
        },
        Method::DsosGate => IdentifierConfig::DsosGate {
            gamma: args.gamma.unwrap_or(DEFAULT_GAMMA),
            delta: args.delta.unwrap_or(DEFAULT_DELTA),
            z: args.z.unwrap_or(DEFAULT_Z),
        },
    })
}

/// Distinguishes data-dependent failures (exit 1) from parameter failures
/// (exit 2).
fn classify(args: &IdentifyArgs, e: IdentifyError) -> CliError {
    match e {
        IdentifyError::MissingSecondView { .. }
        | IdentifyError::KMismatch { .. }
        | IdentifyError::Vector(_) => CliError::input(&args.input, None, e),
        _ => CliError::config(e),
    }
}

pub fn run(args: &IdentifyArgs) -> Result<(), CliError> {
    let config = effective_config(args)?;
    let records = io::read_records(&args.input)?;
    let report =
        partition(&records, &config, args.base.into()).map_err(|e| classify(args, e))?;

    fs::create_dir_all(&args.out).map_err(|e| CliError::input(&args.out, None, e))?;
    io::write_partition(
        &records,
        &report,
        &args.out.join("nc.jsonl"),
        &args.out.join("non_nc.jsonl"),
    )?;
    let base: LogBase = args.base.into();
    let summary = Summary {
        input: args.input.display().to_string(),
        base: match base {
            LogBase::Two => "2",
            LogBase::E => "e",
        },
        config: &config,
        nc_count: report.nc_count,
        non_nc_count: report.non_nc_count,
        total: records.len(),
        uniform_like: report.uniform_like.as_ref(),
    };
    io::write_json(&summary, &args.out.join("summary.json"))?;
    println!(
        "{}: {} NC / {} non-NC of {}",
        args.method.name(),
        report.nc_count,
        report.non_nc_count,
        records.len()
    );
    Ok(())
}
