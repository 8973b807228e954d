//! `clausewatch` command-line tool.
//!
//! Exit codes: 0 on success, 1 on invalid arguments or inputs, 2 when a
//! stage fails at runtime. Results go to stdout or `--out`; logs to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::Invalid;

#[derive(Debug, Parser)]
#[command(name = "clausewatch", version, about = "Detect and classify abusive clauses in Terms of Service")]
struct Cli {
    /// TOML config file (providers, artifact paths, pipeline and server settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus (JSONL).
    Synth(SynthArgs),
    /// Stratified train/val/test split of one task.
    Split(SplitArgs),
    /// Build the dense and BM25 indexes of a knowledge base.
    Index(IndexArgs),
    /// Train the TF-IDF linear clause detector.
    TrainDetector(TrainArgs),
    /// Scan an HTML or text document.
    Scan(ScanArgs),
    /// Batch-classify one split partition.
    Classify(ClassifyArgs),
    /// Metric report for a predictions file.
    Eval(EvalArgs),
    /// Retrieval/generation error decomposition.
    Errors(ErrorsArgs),
    /// Random-effects ranking of configurations over tasks and seeds.
    Meta(MetaArgs),
    /// Run the local HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PartitionArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    FewShot,
    Rag,
    MajorityVote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RetrievalArg {
    Dense,
    Hybrid,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 160)]
    ok: usize,
    #[arg(long, default_value_t = 40)]
    abusive: usize,
    #[arg(long, default_value_t = 5)]
    contracts: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "joint-detect")]
    task: String,
    #[arg(long, default_value = "0.7,0.1,0.2")]
    ratios: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Restrict the knowledge base to one partition of this split.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    partition: PartitionArg,
    /// Output directory; defaults to the configured knowledge base path.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Train on the train partition and report F1 on the test partition.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Regularization constant; ignored with --cv.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Pick C by k-fold cross-validation over the built-in grid.
    #[arg(long)]
    cv: Option<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    abusive_weight: f64,
    /// Output model file; defaults to the configured detector path.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    file: PathBuf,
    /// html or text; guessed from the file extension when omitted.
    #[arg(long)]
    content_type: Option<String>,
    /// Comma-separated subset of illegal,dark,gray.
    #[arg(long)]
    categories: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    no_similar: bool,
    #[arg(long)]
    max_similar: Option<usize>,
    /// Also write per-call audit entries (JSONL) here.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Use the built-in synthetic knowledge base and stub providers.
    #[arg(long)]
    demo: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    task: String,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Examples per class for few-shot (1, 3 or 5 in the standard grid).
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_enum, default_value = "hybrid")]
    retrieval: RetrievalArg,
    #[arg(long, value_enum, default_value = "test")]
    partition: PartitionArg,
    /// Knowledge base directory; defaults to the configured path.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predictions JSONL written by `classify`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    task: String,
    /// Append a run observation (JSONL) for `meta` to this file.
    #[arg(long, requires = "config_id")]
    runs: Option<PathBuf>,
    #[arg(long)]
    config_id: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ErrorsArgs {
    /// One or more predictions files, optionally as NAME=PATH.
    #[arg(long, required = true, num_args = 1..)]
    predictions: Vec<String>,
    #[arg(long)]
    task: String,
    /// Write a CSV table instead of JSON.
    #[arg(long)]
    csv: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetaArgs {
    /// Run observations (CSV or JSONL) with config_id, task_id, seed, macro_f1, micro_f1.
    #[arg(long)]
    runs: PathBuf,
    /// Ranking table (CSV); JSON on stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Mean Macro-F1 ranking with combined standard deviations (CSV).
    #[arg(long)]
    ranking_out: Option<PathBuf>,
    /// Per-task mean ± std table (CSV).
    #[arg(long)]
    breakdown_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    /// Serve the built-in synthetic knowledge base with stub providers.
    #[arg(long)]
    demo: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
