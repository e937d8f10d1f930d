//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chime_core::config::{ConfigLayer, PipelineConfig};
use chime_core::eval::{correctness, load_benchmark, render_table, threshold_sweep, CorrectnessReport, SWEEP_THRESHOLDS};
use chime_core::http::UreqTransport;
use chime_core::ingest::{load_local, GitHubClient, IngestError, IngestSpec, Selection};
use chime_core::issue::preprocess;
use chime_core::llm::{LiveBackend, LiveConfig, LiveEmbedder, ScriptEntry};
use chime_core::pipeline::write_transcript;
use chime_core::{AskOptions, ChatBackend, Embedder, HashedBowEmbedder, IssueRecord, IssueStore, Pipeline, ScriptedBackend};

use crate::{AskArgs, CliError, EvaluateArgs, GlobalArgs, IngestArgs, ServeArgs};

/// Output width of the live embedding provider (all-MiniLM-L6-v2).
pub const LIVE_EMBEDDING_DIMENSION: usize = 384;

const HASHED_PREFIX: &str = "hashed-bow-";

/// Resolved configuration plus the scripted backend files, if any.
pub struct Context {
    pub config: PipelineConfig,
    pub scripts: Vec<PathBuf>,
    api_key: Option<String>,
}

impl Context {
    /// Layers defaults, config file, environment and flags in that order.
    pub fn resolve(global: &GlobalArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let file = match &global.config {
            Some(path) => ConfigLayer::from_toml(path)?,
            None => ConfigLayer::default(),
        };
        let config = PipelineConfig::resolve([file, ConfigLayer::from_env(env)?, global.layer()])?;
        let api_key = env(&config.api_key_env).filter(|k| !k.trim().is_empty());
        Ok(Self { config, scripts: global.scripts.clone(), api_key })
    }

    pub fn open_store(&self) -> Result<IssueStore, CliError> {
        IssueStore::open(&self.config.store_path).map_err(|e| CliError::Other(e.to_string()))
    }

    fn live_config(&self, model: &str) -> Option<LiveConfig> {
        self.config.endpoint.as_ref().map(|endpoint| LiveConfig {
            endpoint: endpoint.clone(),
            api_key: self.api_key.clone(),
            model: model.to_string(),
        })
    }

    /// Scripted backend when script files were given, otherwise the
    /// configured endpoint.
    pub fn backend(&self) -> Result<Arc<dyn ChatBackend>, CliError> {
        if !self.scripts.is_empty() {
            return Ok(Arc::new(load_scripts(&self.scripts)?));
        }
        let live = self
            .live_config(&self.config.model)
            .ok_or_else(|| CliError::Usage("no model backend: pass --script or configure an endpoint".into()))?;
        Ok(Arc::new(LiveBackend::new(Arc::new(UreqTransport::new(Duration::from_secs(120))), live)))
    }

    /// `hashed-bow-<dimension>` is computed locally; any other provider id
    /// names a model served by the configured endpoint.
    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, CliError> {
        let provider = self.config.embedding_provider.as_str();
        if let Some(dim) = provider.strip_prefix(HASHED_PREFIX) {
            let dim: usize = dim
                .parse()
                .ok()
                .filter(|d| *d > 0)
                .ok_or_else(|| CliError::Usage(format!("bad embedding provider {provider:?}")))?;
            return Ok(Arc::new(HashedBowEmbedder::new(dim)));
        }
        let live = self
            .live_config(provider)
            .ok_or_else(|| CliError::Usage(format!("embedding provider {provider:?} needs an endpoint")))?;
        Ok(Arc::new(LiveEmbedder::new(
            Arc::new(UreqTransport::new(Duration::from_secs(60))),
            live,
            LIVE_EMBEDDING_DIMENSION,
        )))
    }

    pub fn pipeline(&self) -> Result<Pipeline, CliError> {
        let store = Arc::new(self.open_store()?);
        Ok(Pipeline::new(store, self.backend()?, self.embedder()?, self.config.clone()))
    }
}

/// Merges script files into one backend.
pub fn load_scripts(paths: &[PathBuf]) -> Result<ScriptedBackend, CliError> {
    let mut entries = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut part: Vec<ScriptEntry> =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        entries.append(&mut part);
    }
    ScriptedBackend::new(entries).map_err(|e| CliError::Input(e.to_string()))
}

fn ingest_error(e: IngestError) -> CliError {
    match e {
        IngestError::InvalidSpec(m) => CliError::Usage(m),
        IngestError::NotFound(m) => CliError::Input(format!("not found: {m}")),
        other => CliError::Other(other.to_string()),
    }
}

/// Counts reported after an ingest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub issues: usize,
    pub code_blocks: usize,
    pub traces: usize,
    pub skipped_lines: usize,
}

impl IngestSummary {
    pub fn of(records: &[IssueRecord]) -> Self {
        Self {
            issues: records.len(),
            code_blocks: records.iter().map(|r| r.code_blocks.len()).sum(),
            traces: records.iter().map(|r| r.stack_traces.len()).sum(),
            skipped_lines: records.iter().map(|r| r.diagnostics.skipped_lines).sum(),
        }
    }
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} issues, {} code blocks, {} traces, {} skipped lines",
            self.issues, self.code_blocks, self.traces, self.skipped_lines
        )
    }
}

pub fn ingest(ctx: &Context, args: &IngestArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let (issues, errors) = match (&args.local, &args.repo) {
        (Some(path), _) => {
            let load = load_local(path).map_err(ingest_error)?;
            (load.issues, load.errors)
        }
        (None, Some(repo)) => {
            let selection = if !args.numbers.is_empty() {
                Selection::Numbers { numbers: args.numbers.clone() }
            } else if let Some(days) = args.updated_within {
                Selection::UpdatedWithin { days }
            } else if args.all_open {
                Selection::AllOpen
            } else {
                return Err(CliError::Usage("choose --numbers, --updated-within or --all-open".into()));
            };
            let spec = IngestSpec::new(repo, selection).map_err(ingest_error)?.with_token(env(&args.token_env));
            let transport = UreqTransport::new(Duration::from_secs(30));
            let mut client = GitHubClient::new(&transport).with_base_url(args.api_base.clone());
            if let Some(dir) = &args.cache_dir {
                client = client.with_cache_dir(dir);
            }
            (client.fetch(&spec, chrono::Utc::now()).map_err(ingest_error)?, Vec::new())
        }
        (None, None) => return Err(CliError::Usage("pass --local or --repo".into())),
    };
    let records: Vec<IssueRecord> = issues.iter().map(preprocess).collect();
    let summary = IngestSummary::of(&records);
    ctx.open_store()?.insert_many(records).map_err(|e| CliError::Other(e.to_string()))?;
    println!("{summary}");
    for e in &errors {
        eprintln!("skipped record: {e}");
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{} malformed record(s) skipped", errors.len())))
    }
}

fn ask_options(no_validate: bool, ablation: Option<chime_core::Ablation>) -> AskOptions {
    AskOptions { validate: !no_validate, ablation, transcript_id: None }
}

pub fn ask(ctx: &Context, args: &AskArgs) -> Result<(), CliError> {
    let pipeline = ctx.pipeline()?;
    let outcome = pipeline.ask(&args.question, &ask_options(args.no_validate, args.ablate))?;
    if args.json {
        println!("{}", to_pretty(&outcome.transcript)?);
    } else {
        println!("{}", outcome.final_response);
    }
    if let Some(dir) = &ctx.config.transcript_dir {
        eprintln!("transcript: {}", dir.join(format!("{}.json", outcome.transcript.id)).display());
    }
    Ok(())
}

fn to_pretty<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Other(format!("writing {}: {e}", path.display())))
}

/// Files written by `evaluate` into the output directory.
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const RESULTS_JSONL: &str = "results.jsonl";
pub const SWEEP_JSON: &str = "sweep.json";
pub const TRANSCRIPTS_DIR: &str = "transcripts";

pub fn read_report(path: &Path) -> Result<CorrectnessReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<(), CliError> {
    let pairs = load_benchmark(&args.benchmark).map_err(|e| CliError::Input(e.to_string()))?;
    let baseline = args.baseline.as_deref().map(read_report).transpose()?;
    let pipeline = ctx.pipeline()?;
    let run = pipeline.run_benchmark(&pairs, &ask_options(args.no_validate, args.ablate));
    let report = correctness(&run.results, baseline.as_ref()).map_err(|e| CliError::Input(e.to_string()))?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Other(format!("{}: {e}", args.out.display())))?;
    let table = render_table(&report);
    write_file(&args.out.join(REPORT_JSON), &(to_pretty(&report)? + "\n"))?;
    write_file(&args.out.join(REPORT_TEXT), &table)?;
    let mut lines = String::new();
    for r in &run.results {
        lines.push_str(&serde_json::to_string(r).map_err(|e| CliError::Other(e.to_string()))?);
        lines.push('\n');
    }
    write_file(&args.out.join(RESULTS_JSONL), &lines)?;
    let dir = args.out.join(TRANSCRIPTS_DIR);
    for t in &run.transcripts {
        write_transcript(&dir, t)?;
    }
    if args.sweep {
        let responses: Vec<String> = run.results.iter().map(|r| r.response.clone()).collect();
        match threshold_sweep(&pairs, &responses, pipeline.embedder.as_ref(), &SWEEP_THRESHOLDS) {
            Ok(points) => write_file(&args.out.join(SWEEP_JSON), &(to_pretty(&points)? + "\n"))?,
            Err(e) => eprintln!("sweep skipped: {e}"),
        }
    }
    for r in run.results.iter().filter(|r| r.error.is_some()) {
        eprintln!("pair {} failed: {}", r.pair_id, r.error.as_deref().unwrap_or_default());
    }
    print!("{table}");
    Ok(())
}

pub fn serve(ctx: &Context, args: &ServeArgs) -> Result<(), CliError> {
    let state = crate::service::AppState::new(ctx.pipeline()?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    runtime.block_on(crate::service::serve(args.addr, state)).map_err(|e| CliError::Other(e.to_string()))
}
