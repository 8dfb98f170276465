//! The `epf` command line.
//!
//! Every command writes its artifacts atomically. Failures exit nonzero and
//! print a one-line JSON error object on stderr.

mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use commands::{
    cmd_anc, cmd_backtest, cmd_ensemble, cmd_evaluate, cmd_gw, cmd_synth, BacktestOutputs, MemberRecord, RunManifest,
};
pub use config::{DataSource, RunConfig};

use crate::error::EpfError;
use crate::eval::Slice;

#[derive(Debug, Parser)]
#[command(name = "epf", version, about = "Day-ahead electricity price forecasting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market and write it as CSV files plus a manifest.
    Synth {
        /// Synthetic generator config, or a run config with synthetic data.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every backtest of a run config, then ensemble and evaluate.
    Backtest {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strict_ensemble: bool,
    },
    /// Average forecast CSVs into one.
    Ensemble {
        #[arg(required = true)]
        members: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "ensemble")]
        label: String,
        #[arg(long)]
        strict_ensemble: bool,
    },
    /// Accuracy metrics of one forecast CSV.
    Evaluate {
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long)]
        actual: PathBuf,
        #[arg(long)]
        naive: PathBuf,
        #[arg(long, default_value = "all")]
        slice: Slice,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise Giacomini-White p-values of forecast CSVs.
    Gw {
        #[arg(required = true, num_args = 2..)]
        forecasts: Vec<PathBuf>,
        #[arg(long)]
        actual: PathBuf,
        /// Directory for the text, CSV and JSON matrices.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feature-group contributions of saved LEAR calibrations.
    Anc {
        #[arg(required = true)]
        fits: Vec<PathBuf>,
        /// Run config the calibrations came from; supplies the data.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct ErrorBody {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<String>,
}

fn error_kind(e: &EpfError) -> (&'static str, Option<String>) {
    match e.root() {
        EpfError::Config { key, .. } => ("config", Some(key.clone())),
        EpfError::MalformedSeries { .. } | EpfError::MalformedFile { .. } | EpfError::Parse { .. } => ("input", None),
        EpfError::VariableNotFound { .. } | EpfError::MissingSeries(_) | EpfError::MissingValue { .. } => {
            ("input", None)
        }
        EpfError::Alignment(_) | EpfError::Shape(_) => ("shape", None),
        EpfError::InsufficientHistory { .. } => ("history", None),
        EpfError::NonConvergence { .. } | EpfError::Divergence { .. } => ("numerical", None),
        EpfError::Undefined(_) => ("undefined", None),
        EpfError::Io(_) => ("io", None),
        EpfError::Json(_) | EpfError::Csv(_) => ("input", None),
        EpfError::Context { .. } => ("internal", None),
    }
}

/// Machine-readable form of an error, as printed on stderr.
pub fn error_json(e: &EpfError) -> String {
    let (kind, key) = error_kind(e);
    let body = serde_json::json!({ "error": ErrorBody { kind, message: e.to_string(), key } });
    body.to_string()
}

pub fn run(cli: Cli) -> crate::Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed),
        Command::Backtest {
            config,
            out,
            seed,
            strict_ensemble,
        } => cmd_backtest(&config, out.as_deref(), seed, strict_ensemble).map(|_| ()),
        Command::Ensemble {
            members,
            out,
            label,
            strict_ensemble,
        } => cmd_ensemble(&members, &out, &label, strict_ensemble),
        Command::Evaluate {
            forecast,
            actual,
            naive,
            slice,
            out,
        } => {
            let report = cmd_evaluate(&forecast, &actual, &naive, slice)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(p) => crate::io::write_atomic(&p, text.as_bytes()),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Gw { forecasts, actual, out } => {
            let m = cmd_gw(&forecasts, &actual, out.as_deref())?;
            print!("{}", m.to_text());
            Ok(())
        }
        Command::Anc { fits, config, out } => {
            let report = cmd_anc(&fits, &config)?;
            match out {
                Some(p) => crate::io::write_json(&p, &report),
                None => {
                    print!("{}", report.to_text());
                    Ok(())
                }
            }
        }
    }
}

/// Entry point of the `epf` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            let code = if matches!(e.root(), EpfError::Config { .. }) { 2 } else { 1 };
            ExitCode::from(code)
        }
    }
}
