//! Command-line front end for the `genkl` library: record ingestion, NC
//! identification, soft relabeling, metric reports, simulation runs, and
//! sensitivity sweeps, with deterministic machine-readable outputs.
//!
//! Exit codes are a stable contract: 0 success, 1 input error (bad or
//! inconsistent data files), 2 config error (bad parameters or config
//! files; clap usage errors also exit 2).

pub mod commands;
pub mod error;
pub mod fixture;
pub mod io;
