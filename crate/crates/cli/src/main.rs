//! `divforge`: build diversity-controlled dataset series and measure them.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divforge_core::{Component, Error, Strategy};

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "divforge", version, about = "Diversity-controlled dataset series for supervised fine-tuning")]
struct Cli {
    /// TOML file with default parameters; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean and deduplicate a JSONL file into a corpus store.
    Ingest(IngestArgs),
    /// Token frequency table and band sizes for one component.
    Tokenstats(TokenstatsArgs),
    /// Build a diversity series and export its datasets.
    Build(BuildArgs),
    /// Compute diversity metrics of a dataset.
    Metrics(MetricsArgs),
    /// Correlate metric reports with evaluation scores.
    Correlate(CorrelateArgs),
    /// Re-export the datasets of a series manifest.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// JSONL with "instruction", "response" and optional "id".
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Store directory to create.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TokenstatsArgs {
    /// Corpus store directory or JSONL file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub component: Option<Component>,
    /// BPE definition file, or `whitespace`.
    #[arg(long)]
    pub tokenizer: Option<String>,
    #[arg(long)]
    pub band_low_max: Option<u64>,
    #[arg(long)]
    pub band_high_min: Option<u64>,
    /// Write the frequency table (token,count,band) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Corpus store directory or JSONL file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub component: Option<Component>,
    /// Samples per dataset.
    #[arg(long)]
    pub size: Option<usize>,
    /// Datasets in the series.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for manifest.json and point_XX.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// BPE definition file, or `whitespace` (micro).
    #[arg(long)]
    pub tokenizer: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub band_low_max: Option<u64>,
    #[arg(long)]
    pub band_high_min: Option<u64>,
    /// Also record mid-band tokens recomputed on each dataset (micro).
    #[arg(long)]
    pub per_subset_bands: Option<bool>,

    /// Sample embeddings (macro).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,

    /// Tags JSONL (meso).
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// Tag embeddings (meso).
    #[arg(long)]
    pub tag_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// JSONL dataset, or `<manifest.json>#<point>` with --corpus.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Label used to join with scores; defaults to --dataset.
    #[arg(long)]
    pub name: Option<String>,
    /// instruction, response or both.
    #[arg(long)]
    pub component: Option<String>,
    /// Comma-separated subset of nr,ed,sl,cr,bleu,ie,kurt,gini.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Comma-separated n-gram orders for nr.
    #[arg(long)]
    pub ngram: Option<String>,
    #[arg(long)]
    pub tokenizer: Option<String>,
    /// Sample embeddings, needed for ed.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Also report the ordered-pair sum over N form of ed.
    #[arg(long)]
    pub ed_literal: Option<bool>,
    #[arg(long)]
    pub bleu_sample_limit: Option<usize>,
    /// Needed when Self-BLEU samples references.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prefix for <prefix>.json and <prefix>.csv; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    /// Glob of metric report JSON files.
    #[arg(long)]
    pub reports: Option<String>,
    /// CSV with columns id,score.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output prefix for <prefix>.json and <prefix>.csv; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only this point.
    #[arg(long)]
    pub point: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        1
    } else {
        2
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("DIVFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::precondition(format!("DIVFORGE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::precondition(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads()?;
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => commands::ingest(&config, a),
        Command::Tokenstats(a) => commands::tokenstats(&config, a),
        Command::Build(a) => commands::build(&config, a),
        Command::Metrics(a) => commands::metrics(&config, a),
        Command::Correlate(a) => commands::correlate(&config, a),
        Command::Export(a) => commands::export(&config, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
