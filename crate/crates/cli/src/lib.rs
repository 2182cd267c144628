//! The `cwemap` command line: one subcommand per pipeline stage, and the
//! annotation server.

pub mod commands;
pub mod config;
pub mod plot;
pub mod server;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cwemap::ingest::IngestError;
use cwemap::rank::RankError;

/// Bad invocation or configuration; exits with status 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A remote service failed; exits with status 3.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ServiceError(pub String);

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_UPSTREAM: i32 = 3;

/// 1 for usage, 3 for upstream failures, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<ServiceError>() {
            return EXIT_UPSTREAM;
        }
        if let Some(e) = cause.downcast_ref::<RankError>() {
            if matches!(
                e,
                RankError::Transport(_) | RankError::Status(_) | RankError::Cancelled
            ) {
                return EXIT_UPSTREAM;
            }
        }
        if let Some(IngestError::Fetch { .. }) = cause.downcast_ref::<IngestError>() {
            return EXIT_UPSTREAM;
        }
    }
    EXIT_DATA
}

#[derive(Debug, Parser)]
#[command(
    name = "cwemap",
    version,
    about = "Rank CVE records against the CWE Top 25 and curate the labelled dataset"
)]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Upper bound on worker threads and in-flight requests.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Weakness catalog JSON (defaults to the bundled 2022 list).
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// Gazetteer file, one phrase per line.
    #[arg(long, global = true)]
    pub gazetteer: Option<PathBuf>,
    /// Stopword file, one word per line.
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a cvelist checkout and keep accepted records.
    Ingest(IngestArgs),
    /// Score records against the catalog with TF.IDF and keep the best.
    Narrow(NarrowArgs),
    /// Fetch NVD detail pages into the snapshot store.
    Scrape(ScrapeArgs),
    /// Show what cleanup removes from record text.
    Preprocess(PreprocessArgs),
    /// Rank all 25 weaknesses for each record.
    Rank(RankArgs),
    /// Score rankings against gold labels.
    Eval(EvalArgs),
    /// Stratified train/test split of a dataset.
    Split(SplitArgs),
    /// Write positive and negative query-document pairs for training.
    ExportTrain(ExportArgs),
    /// Dataset totals and per-label counts.
    Stats(StatsArgs),
    /// Annotation API and static UI.
    Serve(ServeArgs),
    /// Per-class and macro F1 of generated weakness names.
    ScoreGenerated(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// cvelist checkout.
    #[arg(long)]
    pub feed: Option<PathBuf>,
    #[arg(long)]
    pub first_year: Option<u16>,
    #[arg(long)]
    pub last_year: Option<u16>,
    /// Output records JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NarrowArgs {
    /// Records JSONL.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, conflicts_with = "min_score")]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub min_score: Option<f64>,
    /// Output candidates CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScrapeArgs {
    /// Candidates CSV or a plain list of CVE ids, one per line.
    #[arg(long)]
    pub ids: PathBuf,
    /// Snapshot store directory.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Replay saved pages from this directory instead of fetching.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub requests_per_second: Option<f64>,
    /// Fetch again even if a snapshot exists.
    #[arg(long)]
    pub refresh: bool,
    /// Records JSONL to label from the store after scraping.
    #[arg(long, requires = "out")]
    pub records: Option<PathBuf>,
    /// Labelled records JSONL, restricted to the scraped ids.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, conflicts_with = "text")]
    pub records: Option<PathBuf>,
    /// Clean one text and print the report.
    #[arg(long)]
    pub text: Option<String>,
    /// Cleanup reports JSONL (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankerKind {
    Bm25,
    Cosine,
    External,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RankerArgs {
    #[arg(long, value_enum)]
    pub ranker: Option<RankerKind>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Sentence-score aggregation for the cosine ranker: max or mean.
    #[arg(long)]
    pub aggregation: Option<String>,
    /// Embedding store JSONL for the cosine ranker.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Base URL of the external scorer.
    #[arg(long)]
    pub scorer_url: Option<String>,
    /// Answer scorer requests from recorded exchanges.
    #[arg(long, conflicts_with = "scorer_url")]
    pub replay: Option<PathBuf>,
    /// Save live scorer exchanges for later replay.
    #[arg(long)]
    pub record_exchanges: Option<PathBuf>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Run cleanup before ranking (default).
    #[arg(long, overrides_with = "no_preproc")]
    pub preproc: bool,
    #[arg(long)]
    pub no_preproc: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub ranker: RankerArgs,
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Rank only this record and print the table.
    #[arg(long)]
    pub cve: Option<String>,
    /// Rankings JSONL (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub ranker: RankerArgs,
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Gold dataset CSV or JSONL.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Score precomputed rankings instead of ranking.
    #[arg(long, conflicts_with = "ranker")]
    pub rankings: Option<PathBuf>,
    /// Model name in the report.
    #[arg(long)]
    pub name: Option<String>,
    /// Cut-offs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Causal rows: exclude, or first (score against the first weakness).
    #[arg(long)]
    pub chains: Option<String>,
    /// Evaluate on the test side of the configured split only.
    #[arg(long)]
    pub test_split: bool,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-metric SVG bar charts.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// Earlier report JSON files to tabulate and plot alongside.
    #[arg(long)]
    pub compare: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Receives train.csv and test.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Negatives per positive: 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Export the train side of the configured split only.
    #[arg(long)]
    pub train_split: bool,
    #[arg(long)]
    pub no_preproc: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset CSV or JSONL.
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Snapshot store supplying NVD labels.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Exactly three annotator ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub annotators: Option<Vec<String>>,
    #[arg(long)]
    pub journal: Option<PathBuf>,
    #[arg(long)]
    pub feedback_log: Option<PathBuf>,
    /// Ranking shown next to each task: bm25 or none.
    #[arg(long)]
    pub assist: Option<String>,
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSONL of `{cve_id, label}` predictions.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}
