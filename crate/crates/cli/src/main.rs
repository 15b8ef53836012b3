//! `ofsulr` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ofsulr_core::classifiers::ClassifierKind;
use ofsulr_core::error::ErrorClass;
use ofsulr_core::modelselect::SelectionMetric;
use ofsulr_core::pipeline::PipelineOrder;
use ofsulr_core::preprocess::EncodingPolicy;
use ofsulr_core::{Recipe, ScalerKind};

#[derive(Debug, Parser)]
#[command(name = "ofsulr", version, about = "Cluster-labelled logistic regression for unlabeled tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-column null counts, inferred kinds and valid percentages.
    Profile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "generic")]
        recipe: Recipe,
        /// Print JSON instead of an aligned table.
        #[arg(long)]
        json: bool,
    },
    /// Apply a cleaning recipe and write the cleaned CSV.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "generic")]
        recipe: Recipe,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive binary labels with k-means and write the labelled table.
    Cluster(PipelineArgs),
    /// Fit the PCA projection and report the retained components.
    Pca(PipelineArgs),
    /// Grid-search the logistic regression and write the CV table.
    Tune(PipelineArgs),
    /// Run the full pipeline and write the model bundle and reports.
    Train(PipelineArgs),
    /// Score a labelled CSV with a saved bundle.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every classifier on the same split and tabulate the results.
    Compare(PipelineArgs),
    /// Replay a labelled CSV through a saved bundle in micro-batches.
    StreamEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = ofsulr_core::stream::DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        interval_ms: u64,
        #[arg(long, default_value_t = ofsulr_core::stream::DEFAULT_CAPACITY)]
        capacity: usize,
        /// Write the final report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate Gaussian blobs with a ground-truth sidecar file.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        clusters: usize,
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `auto` or a fixed cluster count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Auto,
    Fixed(usize),
}

fn parse_k(s: &str) -> Result<KChoice, String> {
    if s == "auto" {
        return Ok(KChoice::Auto);
    }
    s.parse().map(KChoice::Fixed).map_err(|_| format!("expected `auto` or a count, got `{s}`"))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .ok_or_else(|| format!("expected a range like 2..10, got `{s}`"))?;
    let lo = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
    let hi = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
    Ok((lo, hi))
}

/// Flags shared by the pipeline verbs. Each one overrides the matching
/// config file entry.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub recipe: Option<Recipe>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<PipelineOrder>,
    /// Cluster the training rows only.
    #[arg(long)]
    pub label_train_only: bool,
    #[arg(long)]
    pub scale: Option<ScalerKind>,
    #[arg(long)]
    pub encode: Option<EncodingPolicy>,
    #[arg(long, value_parser = parse_k)]
    pub k: Option<KChoice>,
    #[arg(long, value_parser = parse_range)]
    pub k_range: Option<(usize, usize)>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub variance: Option<f64>,
    /// TOML file with `solver`, `penalty` and `C` lists.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub metric: Option<SelectionMetric>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated subset of logreg, svm, tree, forest, gbt.
    #[arg(long, value_delimiter = ',')]
    pub classifiers: Option<Vec<ClassifierKind>>,
    /// Skip the streamed half of `compare`.
    #[arg(long)]
    pub no_stream: bool,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
