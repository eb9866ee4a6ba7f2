//! The `solaudit` command line: one subcommand per pipeline stage, a TOML
//! config with `${VAR}` interpolation, and a manifest beside every artifact.
//!
//! Exit status is 0 on success, 1 when a stage fails and 2 for usage or
//! configuration errors. Failures are also printed to stderr as one JSON
//! object.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{interpolate, LoadedConfig, RunConfig, CONFIG_ENV};
pub use manifest::{blob_hash, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Config,
    Pipeline,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Usage, message: m.into() }
    }

    pub fn config(m: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, message: m.into() }
    }

    pub fn pipeline(m: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Pipeline, message: m.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Pipeline => 1,
            ErrorKind::Usage | ErrorKind::Config => 2,
        }
    }

    pub fn to_json(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Usage => "usage",
            ErrorKind::Config => "config",
            ErrorKind::Pipeline => "pipeline",
        };
        serde_json::json!({"error": {"kind": kind, "message": self.message}}).to_string()
    }
}

macro_rules! pipeline_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::pipeline(e.to_string())
            }
        }
    )*};
}

pipeline_error!(
    crate::corpus::CorpusError,
    crate::taxonomy::TaxonomyError,
    crate::prompts::PromptError,
    crate::gateway::GatewayError,
    crate::detectors::DetectorError,
    crate::evaluation::EvalError,
    crate::jsonl::JsonlError
);

#[derive(Debug, Parser)]
#[command(name = "solaudit", version, about = "LLM smart-contract vulnerability detection harness")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file; falls back to $SOLAUDIT_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Artifact root (corpus/, labels/, prompts/, runs/, reports/).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads and in-flight request bound.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Serve model calls from the cache only; never touch the network.
    #[arg(long, global = true)]
    pub offline: bool,
    /// Abort on unparseable replies and unknown detector ids.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    /// Sequential execution instead of the worker pool.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch or read sources, strip comments, count tokens, apply the budget.
    Ingest(IngestArgs),
    /// Majority-vote gold labels from tool reports.
    Label(LabelArgs),
    /// Detection and generation prompt records for the labelled corpus.
    BuildPrompts(BuildPromptsArgs),
    /// Render prompt records into a fine-tuning dataset.
    Export(ExportArgs),
    /// Upload a chat dataset and start a fine-tuning job.
    Finetune(FinetuneArgs),
    /// Run one detection strategy over the corpus.
    Detect(DetectArgs),
    /// Critic pass over zero-shot predictions.
    Critic(CriticArgs),
    /// Score predictions against gold labels.
    Score(ScoreArgs),
    /// Combine stored metrics into one table.
    Report(ReportArgs),
    /// Inspect the response cache or re-run a detection offline.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// One address per line.
    #[arg(long)]
    pub addresses_file: Option<PathBuf>,
    /// Read `<address>.sol` files instead of querying the explorer.
    #[arg(long)]
    pub sources_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Tool report as TOOL=PATH; repeatable, overrides the config.
    #[arg(long = "report", value_name = "TOOL=PATH")]
    pub reports: Vec<String>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Corpus file; defaults to corpus/contracts.jsonl.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildPromptsArgs {
    /// Detection prompts only.
    #[arg(long)]
    pub detection_only: bool,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// alpaca or chat.
    #[arg(long, default_value = "chat")]
    pub rendering: String,
    /// Keep a seeded, class-balanced sample of at most N prompts.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub base_model: String,
    #[arg(long, default_value_t = 3)]
    pub epochs: u32,
    /// Poll until the job finishes.
    #[arg(long)]
    pub wait: bool,
    #[arg(long, default_value_t = 30)]
    pub poll_secs: u64,
    #[arg(long, default_value_t = 480)]
    pub max_polls: usize,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// finetuned, zeroshot, zeroshot-critic, gptlens or random.
    #[arg(long)]
    pub strategy: String,
    #[arg(long)]
    pub model: Option<String>,
    /// Critic model for zeroshot-critic and gptlens; defaults to --model.
    #[arg(long)]
    pub critic_model: Option<String>,
    /// gptlens inclusion rule, e.g. gt1c, gte1c, gt5f-gt5c.
    #[arg(long)]
    pub threshold: Option<String>,
    /// alpaca or chat, for finetuned models.
    #[arg(long)]
    pub rendering: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Corpus file; defaults to labels/contracts.jsonl, then corpus/contracts.jsonl.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CriticArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub model: String,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, required = true)]
    pub preds: Vec<PathBuf>,
    /// Gold labels; defaults to labels/gold.jsonl.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// gold or true-positives.
    #[arg(long, default_value = "gold")]
    pub weighting: String,
    /// Report directory; defaults to reports/.
    #[arg(long = "report-dir")]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files written by `score`.
    #[arg(long, required = true)]
    pub metrics: Vec<PathBuf>,
    /// text, csv or jsonl.
    #[arg(long, default_value = "text")]
    pub format: String,
    /// Also write all formats into this directory.
    #[arg(long = "report-dir")]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Print the cached raw response for this fingerprint.
    #[arg(long, conflicts_with = "manifest")]
    pub fingerprint: Option<String>,
    /// Re-run the detection recorded in this manifest from cache and compare.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn execute<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError { kind: ErrorKind::Usage, message: e.to_string() }
        }
        _ => CliError::usage(e.to_string()),
    })?;
    commands::dispatch(cli)
}

/// Entry point for the binary: returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", CliError::usage(e.kind().to_string()).to_json());
            }
            code
        }
        Ok(cli) => match commands::dispatch(cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("{}", e.to_json());
                e.exit_code()
            }
        },
    }
}
