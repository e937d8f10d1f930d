//! Operator surface for the question answering pipeline: the `chime`
//! command line (`ingest`, `ask`, `evaluate`, `serve`) and the HTTP service
//! used by the chat client.
//!
//! Exit codes are stable:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | other failure (store or file I/O, network) |
//! | 2 | usage or configuration error |
//! | 3 | no context: the issue store is empty |
//! | 4 | structured query planning failed with no other context |
//! | 5 | model backend error |
//! | 6 | invalid input (malformed benchmark, records or question) |

pub mod commands;
pub mod service;

use std::path::PathBuf;
use std::process::ExitCode;

use chime_core::config::{ConfigError, ConfigLayer};
use chime_core::{Ablation, PipelineError};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "chime", version, about = "Question answering over issue reports with response validation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Set flags override the environment,
/// which overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file with `PipelineConfig` keys.
    #[arg(long, global = true, env = "CHIME_CONFIG")]
    pub config: Option<PathBuf>,
    /// Issue store file (JSON lines).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Scripted backend file; may be repeated. Replaces the live endpoint.
    #[arg(long = "script", global = true)]
    pub scripts: Vec<PathBuf>,
    /// OpenAI-compatible base URL.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Cosine threshold for similarity decisions.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Number of issues retrieved as context.
    #[arg(long = "retrieval-k", global = true)]
    pub retrieval_k: Option<usize>,
    /// Directory for per-question transcript files.
    #[arg(long, global = true)]
    pub transcript_dir: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            temperature: self.temperature,
            similarity_threshold: self.threshold,
            retrieval_k: self.retrieval_k,
            store_path: self.store.clone(),
            transcript_dir: self.transcript_dir.clone(),
            ..ConfigLayer::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch or load issues, preprocess them and add them to the store.
    Ingest(IngestArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Answer and grade a JSON-lines benchmark and write a correctness report.
    Evaluate(EvaluateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Local `.json`/`.jsonl` file or directory.
    #[arg(long, conflicts_with = "repo")]
    pub local: Option<PathBuf>,
    /// Repository as `owner/name`.
    #[arg(long, required_unless_present = "local")]
    pub repo: Option<String>,
    /// Issue numbers, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["updated_within", "all_open"])]
    pub numbers: Vec<u64>,
    /// Issues updated within this many days.
    #[arg(long, conflicts_with = "all_open")]
    pub updated_within: Option<u32>,
    /// Every open issue.
    #[arg(long)]
    pub all_open: bool,
    /// Environment variable holding the API token.
    #[arg(long, default_value = "GITHUB_TOKEN")]
    pub token_env: String,
    /// Cache directory for fetched issues.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// API base URL.
    #[arg(long, default_value = chime_core::ingest::DEFAULT_API)]
    pub api_base: String,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub question: String,
    /// Return the retrieval-grounded answer without validation.
    #[arg(long)]
    pub no_validate: bool,
    /// Disable one component: issue-preprocessing, query-preprocessing, cove or mt.
    #[arg(long)]
    pub ablate: Option<Ablation>,
    /// Print the whole transcript as JSON instead of the answer.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Benchmark file, one JSON pair per line.
    pub benchmark: PathBuf,
    /// Output directory for the report, results and transcripts.
    #[arg(long)]
    pub out: PathBuf,
    /// Earlier `report.json` to compare against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub no_validate: bool,
    #[arg(long)]
    pub ablate: Option<Ablation>,
    /// Also write a threshold sweep over the similarity-graded pairs.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Pipeline(e) => match e.class() {
                "empty-context" => 3,
                "planning" => 4,
                "backend" => 5,
                "invalid-input" => 6,
                _ => 1,
            },
            CliError::Input(_) => 6,
            CliError::Backend(_) => 5,
            CliError::Other(_) => 1,
        }
    }
}

/// Runs a parsed command line. `env` looks up environment variables.
pub fn run(cli: Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let ctx = commands::Context::resolve(&cli.global, env)?;
    match cli.command {
        Command::Ingest(args) => commands::ingest(&ctx, &args, env),
        Command::Ask(args) => commands::ask(&ctx, &args),
        Command::Evaluate(args) => commands::evaluate(&ctx, &args),
        Command::Serve(args) => commands::serve(&ctx, &args),
    }
}

/// Entry point shared by the binary: reports errors on stderr and maps
/// them to exit codes.
pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli, &|k| std::env::var(k).ok()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
