//! Command-line front end: argument definitions, exit-code mapping and
//! [`run`], which the `fincorpus` binary calls with its process arguments.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::filter::LevelFilter;

pub mod artifacts;
pub mod commands;
pub mod config;

/// Exit status for validation failures.
pub const EXIT_VALIDATION: u8 = 1;
/// Exit status for I/O and scoring backend failures.
pub const EXIT_IO: u8 = 2;
/// Exit status for unparseable command lines.
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(name = "fincorpus", version, about = "Financial sentiment corpus construction and evaluation")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Upper bound on concurrent scorer calls.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,

    /// Directory for artifacts and manifest.json [default: out]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// JSON or key=value file with backend/finetune/encoder sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Do not echo result tables to stdout.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    /// Increase log verbosity on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a phrasebank file into the dataset line format.
    Ingest(IngestArgs),
    /// Label distribution per dataset, or for all four phrasebank agreement files.
    Stats(StatsArgs),
    /// Stratified train/validation/test split.
    Split(SplitArgs),
    /// Balanced next-sentence pairs from a blank-line-delimited corpus.
    NspPairs(NspPairsArgs),
    /// Same-label long-sentence samples, random or NSP-gated.
    Concat(ConcatArgs),
    /// Token-length histogram.
    TokenizeStats(TokenizeStatsArgs),
    /// Confusion matrix and metrics from predictions or a scoring backend.
    Evaluate(EvaluateArgs),
    /// Metrics on growing prefixes of a shuffled prediction stream.
    Sweep(SweepArgs),
    /// Trainable parameter counts per freeze depth.
    FreezeTable(FreezeTableArgs),
    /// Concatenate datasets and re-assign ids.
    Merge(MergeArgs),
    /// Validate, normalize and deduplicate generated samples.
    SynthIngest(SynthIngestArgs),
    /// Re-run a recorded command and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct TokenizerArgs {
    /// WordPiece vocabulary, one token per line [default: bundled uncased vocabulary]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Keep case and accents.
    #[arg(long)]
    pub cased: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendChoice {
    Mock,
    Remote,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Overrides the configured backend kind.
    #[arg(long, value_enum)]
    pub backend: Option<BackendChoice>,
    /// Overrides the configured endpoint; FINCORPUS_BACKEND_URL takes precedence over both.
    #[arg(long)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Phrasebank file (`sentence@label` lines).
    #[arg(long, conflicts_with = "phrasebank_dir", required_unless_present = "phrasebank_dir")]
    pub input: Option<PathBuf>,
    /// Directory holding the Sentences_*Agree.txt files; use with --agreement.
    #[arg(long, requires = "agreement")]
    pub phrasebank_dir: Option<PathBuf>,
    /// Agreement level: 50, 66, 75 or 100.
    #[arg(long)]
    pub agreement: Option<u8>,
    /// latin1, utf8 or auto.
    #[arg(long, default_value = "latin1")]
    pub encoding: String,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset files (repeatable).
    #[arg(long, required_unless_present = "phrasebank_dir")]
    pub dataset: Vec<PathBuf>,
    /// Report all four agreement files from this directory.
    #[arg(long, conflicts_with = "dataset")]
    pub phrasebank_dir: Option<PathBuf>,
    #[arg(long, default_value = "latin1")]
    pub encoding: String,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// train,validation,test fractions summing to 1.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
}

#[derive(Debug, Args)]
pub struct NspPairsArgs {
    /// Corpus files; more than one are generated as shards with seeds seed+i.
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Pairs per shard; must be even.
    #[arg(long)]
    pub target: usize,
    /// Held-out pairs, balanced by label.
    #[arg(long, default_value_t = 0)]
    pub test_size: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodChoice {
    Random,
    Sequential,
}

#[derive(Debug, Args)]
pub struct ConcatArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodChoice,
    /// Cap on tokens per sample, including [CLS] and [SEP].
    #[arg(long, default_value_t = fincorpus::concat::DEFAULT_MAX_TOKENS)]
    pub max_tokens: usize,
    /// Run length range, `MIN-MAX`.
    #[arg(long, default_value = "2-6")]
    pub run_length: String,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct TokenizeStatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bin_width: usize,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskChoice {
    Sentiment,
    Nsp,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction lines `{"id","actual","predicted","probs"?}`.
    #[arg(long, required_unless_present_any = ["dataset", "pairs"], conflicts_with = "pairs")]
    pub predictions: Option<PathBuf>,
    /// Labeled dataset to score with the sentiment backend, or to supply texts for --predictions.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// NSP pair lines to score with the NSP backend.
    #[arg(long, conflicts_with = "dataset")]
    pub pairs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sentiment")]
    pub task: TaskChoice,
    /// Row label in the report table.
    #[arg(long, default_value = "model")]
    pub model_name: String,
    /// List records with this `actual:predicted` combination (repeatable).
    #[arg(long)]
    pub misclassified: Vec<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum, default_value = "sentiment")]
    pub task: TaskChoice,
    /// Comma-separated ascending prefix sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct FreezeTableArgs {
    /// Overrides encoder.layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Overrides encoder.num_labels.
    #[arg(long)]
    pub num_labels: Option<u64>,
    /// Leave the pooler out of the head.
    #[arg(long)]
    pub no_pooler: bool,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Datasets in merge order (repeatable).
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthIngestArgs {
    /// Lines of `{"text", "label"}`.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Maps an error chain to an exit status: I/O and backend failures give
/// [`EXIT_IO`], everything else [`EXIT_VALIDATION`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<fincorpus::scoring::ScoreError>() {
            use fincorpus::scoring::ScoreError::*;
            return match e {
                InvalidInput(_) | EmptyBatch | InvalidConfig(_) => EXIT_VALIDATION,
                Timeout | RemoteError(_) | Transport(_) | InvalidResponse(_) => EXIT_IO,
            };
        }
        if cause.downcast_ref::<commands::ReplayMismatch>().is_some() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_VALIDATION
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::WARN,
        1 => LevelFilter::INFO,
        _ => LevelFilter::DEBUG,
    };
    // a second in-process run keeps the first subscriber
    let _ = tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).try_init();
    match commands::dispatch(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
