//! `vcg`: curation, evaluation and toy-training pipelines for visual
//! commonsense graphs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error,
//! 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<vcg_core::Error> for CliError {
    fn from(e: vcg_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "vcg", version, about = "Visual commonsense graph toolkit")]
pub struct Cli {
    /// Flat TOML file of default flag values, keyed by long flag name
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Read graph JSONL and write it back in canonical order
    Ingest(IngestArgs),
    /// Count images, edges per relation and the most frequent descriptions
    Stats(StatsArgs),
    /// Remove generic inferences at threshold t
    Filter(FilterArgs),
    /// Edge counts after filtering at several thresholds
    Sweep(SweepArgs),
    /// Build the unique or novel evaluation subset of a validation graph
    Subset(SubsetArgs),
    /// Score a generated corpus
    Evaluate(EvaluateArgs),
    /// Text-to-image recall@k from two embedding files
    RetrievalEval(RetrievalArgs),
    /// Compare analytic and finite-difference gradients of the toy model
    Gradcheck(GradcheckArgs),
    /// Train the toy captioner with the contrastive retrieval term
    TrainToy(TrainArgs),
    /// Histogram of per-inference word entropy
    ReportEntropy(EntropyArgs),
}

#[derive(Args, Debug)]
pub struct GraphInput {
    /// Graph JSONL, one edge per line
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Image embedding file (sidecar <FILE>.ids.jsonl alongside)
    #[arg(long, value_name = "FILE")]
    pub emb: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Output graph JSONL
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Number of most frequent descriptions to list [default: 10]
    #[arg(long)]
    pub top_k: Option<usize>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Filtering threshold [default: 10]
    #[arg(long = "t", value_name = "T")]
    pub t: Option<f64>,
    /// Filtered graph JSONL
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// JSON report of per-description decisions
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Optional JSONL listing every removed edge
    #[arg(long, value_name = "FILE")]
    pub removed: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: GraphInput,
    /// Comma-separated thresholds [default: 1,5,10,20,50]
    #[arg(long)]
    pub thresholds: Option<String>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SubsetArgs {
    /// unique or novel
    #[arg(long)]
    pub kind: Option<String>,
    #[command(flatten)]
    pub input: GraphInput,
    /// Training graph JSONL (required for novel)
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    /// Minimum distinct descriptions per kept image [default: 5]
    #[arg(long)]
    pub min_desc: Option<usize>,
    /// Subset graph JSONL
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Generated corpus JSONL: {"image_id", "relation", "text", "parse"?}
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Training graph JSONL, enabling entropy and novelty
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    /// Reference JSONL {"image_id", "relation", "references"}, enabling BLEU-2 and CIDEr
    #[arg(long, value_name = "FILE")]
    pub references: Option<PathBuf>,
    /// Text embeddings for recall@k (with --image-emb)
    #[arg(long, value_name = "FILE")]
    pub text_emb: Option<PathBuf>,
    /// Image embeddings for recall@k (with --text-emb)
    #[arg(long, value_name = "FILE")]
    pub image_emb: Option<PathBuf>,
    /// Comma-separated recall cut-offs [default: 1,5,10]
    #[arg(long)]
    pub k: Option<String>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RetrievalArgs {
    /// Text embeddings; sidecar ids name each text's true image
    #[arg(long, value_name = "FILE")]
    pub text_emb: Option<PathBuf>,
    /// Image embeddings
    #[arg(long, value_name = "FILE")]
    pub image_emb: Option<PathBuf>,
    /// Comma-separated recall cut-offs [default: 1,5,10]
    #[arg(long)]
    pub k: Option<String>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// First random case [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds to check [default: 1]
    #[arg(long)]
    pub seeds: Option<u64>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Toy dataset JSONL; omit to use the built-in synthetic clusters
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Held-out toy dataset JSONL for retrieval accuracy [default: the training data]
    #[arg(long, value_name = "FILE")]
    pub eval: Option<PathBuf>,
    /// Weight of the contrastive term [default: 0.5]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// AdamW learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// AdamW weight decay [default: 0.01]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Training epochs [default: 10]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Items per optimizer step [default: 8]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for initialisation, sampling and synthetic data [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Token embedding width [default: 8]
    #[arg(long)]
    pub d_e: Option<usize>,
    /// Hidden width [default: 16]
    #[arg(long)]
    pub d_h: Option<usize>,
    /// Shared representation width [default: 8]
    #[arg(long)]
    pub d_r: Option<usize>,
    /// Size of each similar-image set [default: 2]
    #[arg(long)]
    pub h_size: Option<usize>,
    /// Per-epoch trace CSV
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    /// Binary checkpoint of the trained parameters
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    /// Generated corpus JSONL
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Training graph JSONL for the unigram distribution
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    /// Histogram bin width in bits [default: 2]
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// JSON report path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DIVE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("DIVE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads()
        .and_then(|()| config::Settings::load(cli.config.as_deref()))
        .and_then(|settings| commands::run(cli.command, &settings));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
