//! `credence`: command-line access to ingest, dedup, scoring, the classifier, similarity
//! benchmarks, geo statistics and monitoring.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "credence", version, about = "Tweet credibility, similarity and geo statistics engine")]
pub struct Cli {
    /// Engine configuration file (key = value lines)
    #[arg(long, global = true, env = "CREDENCE_CONFIG", value_name = "FILE")]
    pub config_file: Option<PathBuf>,

    /// Result format; each command has its own default
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Filter a JSON-lines file by language, geo presence and topic
    Ingest(IngestArgs),
    /// Collapse near-duplicate tweets, keeping the earliest of each group
    Dedup(DedupArgs),
    /// Weighted credibility of one tweet
    ScoreTweet(ScoreTweetArgs),
    /// Weighted credibility of one account
    ScoreUser(ScoreUserArgs),
    /// Train the neural classifier and save the model
    Train(TrainArgs),
    /// Accuracy, precision and recall of a saved model
    Eval(EvalArgs),
    /// Score records with a saved model
    Predict(PredictArgs),
    /// Time the four similarity measures over a corpus
    BenchSim(BenchSimArgs),
    /// Credible / not credible percentages per country or continent
    Stats(StatsArgs),
    /// Sentiment clusters as GeoJSON
    Clusters(ClustersArgs),
    /// Credibility heatmap grid as GeoJSON
    Heatmap(HeatmapArgs),
    /// Sample a tweet's or user's credibility on a fixed cadence
    Monitor(MonitorArgs),
    /// Label a score series as constant, growing, decreasing or mixed
    Trend(TrendArgs),
    /// Ingest, dedup, score and write all statistics for one input file
    Run(RunArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("geo").args(["require_geo", "allow_missing_geo"])))]
pub struct IngestArgs {
    /// Input JSON-lines file, `-` for stdin
    #[arg(long, short)]
    pub input: PathBuf,
    /// Accepted records as JSON lines (stdout when omitted)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Rejection log as CSV
    #[arg(long)]
    pub rejections: Option<PathBuf>,
    /// Comma-separated language codes, `*` for any
    #[arg(long)]
    pub languages: Option<String>,
    /// Reject records without coordinates
    #[arg(long)]
    pub require_geo: bool,
    /// Keep records without coordinates
    #[arg(long)]
    pub allow_missing_geo: bool,
    /// Topic keyword file (section, language, word), or `bundled`
    #[arg(long)]
    pub topics: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also persist accepted tweets, authors and scores to this store
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Snapshot time for stored records (default: each tweet's creation time)
    #[arg(long, requires = "store")]
    pub snapshot_at: Option<String>,
}

#[derive(Args, Debug)]
pub struct DedupArgs {
    /// Ingest-format JSON-lines file
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Similarity threshold in [0, 1] (default: the mode's)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Representatives as JSON lines (stdout when omitted)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Group membership CSV
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Realtime,
    Offline,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["features", "record"])))]
pub struct ScoreTweetArgs {
    /// Tweet feature vector as JSON
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// One ingest record (tweet plus author) as JSON
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Weights file (key = value)
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["features", "user"])))]
pub struct ScoreUserArgs {
    /// User feature vector as JSON
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// User profile as JSON
    #[arg(long, requires = "now")]
    pub user: Option<PathBuf>,
    /// Evaluation time, RFC 3339
    #[arg(long)]
    pub now: Option<String>,
    /// Comma-separated scores of the user's most recent tweets (at most 20)
    #[arg(long, requires = "user")]
    pub scores: Option<String>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("size").args(["hidden", "alpha"])))]
pub struct TrainArgs {
    /// Labelled ingest records (.jsonl) or a feature table (.csv)
    #[arg(long, short)]
    pub data: PathBuf,
    /// Feature configuration C1..C6
    #[arg(long, default_value = "C1")]
    pub config: String,
    #[arg(long, default_value_t = 100_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Hidden units
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Size the hidden layer from the sample-count bound with this alpha (2..10)
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model file to write
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Labelled ingest records (.jsonl) or a feature table (.csv)
    #[arg(long, short)]
    pub data: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Evaluate only the held-out third produced by this split seed
    #[arg(long)]
    pub holdout_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Ingest records (.jsonl) or a feature table (.csv)
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Predictions CSV (stdout when omitted)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchSimArgs {
    /// Ingest records (.jsonl) or plain text, one tweet per line
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    /// `auto`, `all`, or a number of sampled pairs
    #[arg(long, default_value = "auto")]
    pub pairs: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Comma-separated subset of levenshtein, needleman-wunsch, jaro-winkler, smith-waterman
    #[arg(long)]
    pub algorithms: Option<String>,
    #[arg(long = "match", default_value_t = 1.0)]
    pub match_score: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub mismatch: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub gap: f64,
    /// Report CSV (stdout when omitted)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum LevelArg {
    Country,
    Continent,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// CSV with `country` and `verdict` columns, such as the `scored.csv` of a run
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "country")]
    pub level: LevelArg,
    /// Regions with fewer records are left out
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Country-to-continent CSV
    #[arg(long)]
    pub continents: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClustersArgs {
    /// CSV with `lat`, `lon` and `sentiment` columns
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub cell_size: Option<f64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write a standalone map page
    #[arg(long)]
    pub html: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ClassArg {
    Credible,
    NotCredible,
    Both,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    /// CSV with `lat`, `lon` and `verdict` columns
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub cell_size: Option<f64>,
    #[arg(long = "class", value_enum, default_value = "both")]
    pub class: ClassArg,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub html: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("target").required(true).args(["tweet", "user"])))]
pub struct MonitorArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub tweet: Option<String>,
    #[arg(long)]
    pub user: Option<String>,
    #[arg(long)]
    pub ticks: usize,
    #[arg(long, default_value_t = 60)]
    pub interval_mins: i64,
    /// Simulated clock (the default)
    #[arg(long, conflicts_with = "wall_clock")]
    pub fake_clock: bool,
    /// Sleep on the real clock between ticks
    #[arg(long, conflicts_with = "start")]
    pub wall_clock: bool,
    /// Simulated start time, RFC 3339 (default: the target's newest snapshot)
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("series").required(true).args(["input", "values"])))]
pub struct TrendArgs {
    /// Series CSV with `timestamp` and `score` columns
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Comma-separated scores
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long)]
    pub flat_epsilon: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Topic keyword file, or `bundled`
    #[arg(long)]
    pub topics: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("credence: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
