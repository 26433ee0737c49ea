//! `folcount`: batch pipelines over user-trace corpora.
//!
//! Every command reads explicit input files, writes one output file, and
//! writes a run manifest to `<out>.manifest.json`. Diagnostics go to stderr
//! as `error[CODE]: message` lines. Exit status is 0 on a clean run, 1 when
//! records were rejected or the run failed, and 2 on usage errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use folcount_core::detection::{DEFAULT_SWEEP, DEFAULT_THRESHOLD};
use folcount_core::{Backend, Label};

#[derive(Parser)]
#[command(name = "folcount", version, about = "Neighborhood-based follower count estimation and manipulation detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus from a JSON generator config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the feature matrix of a corpus as CSV.
    Featurize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate follower counts of corpus users from a reference population.
    Predict {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Only reference users carrying this label form the population.
        #[arg(long, value_parser = parse_label)]
        reference_label: Option<Label>,
        #[arg(long, default_value = "kd_tree")]
        backend: Backend,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flag users whose displayed count deviates from the estimate.
    Detect {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Corpus whose labels are used to score the verdicts.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster users by their unfollow time series.
    Cluster {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a tab-separated table of the series for plotting.
        #[arg(long)]
        series_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error rates over a tolerance sweep, detection scores when labels are
    /// present, and tolerance to injected followers per size group.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, value_parser = parse_label)]
        reference_label: Option<Label>,
        #[arg(long, default_value = "kd_tree")]
        backend: Backend,
        /// Comma-separated tolerance bands.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
        sweep: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Seed for the injected-follower experiment.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_label(s: &str) -> Result<Label, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown label `{s}` (expected random, customer or unlabeled)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(outcome) => {
            for r in &outcome.rejections {
                eprintln!("error[E_VALIDATION]: {}: line {}: field `{}`: {}", r.source, r.line, r.field, r.message);
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if outcome.rejections.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}
