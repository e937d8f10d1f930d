//! End-to-end question answering: classification, rewriting, structured
//! query planning, retrieval, the initial answer and validation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::eval::{grade, BenchmarkPair, GradedResult, GradingMode};
use crate::llm::{ChatBackend, Embedder, LlmError};
use crate::query::{classify_type, transform, Query, QueryType, TransformedQuery};
use crate::retrieval::{answer, retrieve, RetrievalError};
use crate::store::{plan_query, Corpus, IssueStore, PlanningError, StoreError};
use crate::transcript::{
    AnswerSection, PipelineTranscript, PlanSection, QuerySection, RetrievalSection, Section, Session,
};
use crate::validator::{Validator, ValidatorSettings};

/// One pipeline component switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    IssuePreprocessing,
    QueryPreprocessing,
    Cove,
    Mt,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::IssuePreprocessing, Ablation::QueryPreprocessing, Ablation::Cove, Ablation::Mt];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::IssuePreprocessing => "issue-preprocessing",
            Ablation::QueryPreprocessing => "query-preprocessing",
            Ablation::Cove => "cove",
            Ablation::Mt => "mt",
        }
    }

    /// Earliest transcript section the ablation can change.
    pub fn first_section(self) -> Section {
        match self {
            Ablation::QueryPreprocessing => Section::Query,
            Ablation::IssuePreprocessing => Section::Plan,
            Ablation::Cove => Section::Cove,
            Ablation::Mt => Section::Mt,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL.into_iter().find(|a| a.as_str() == s.trim()).ok_or_else(|| {
            let names: Vec<_> = Ablation::ALL.iter().map(|a| a.as_str()).collect();
            format!("unknown component {s:?}; expected one of {}", names.join(", "))
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no context available: {0}")]
    EmptyContext(String),
    #[error(transparent)]
    Planning(PlanningError),
    #[error("backend error: {0}")]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("writing transcript {path}: {message}")]
    Transcript { path: String, message: String },
}

impl PipelineError {
    /// Stable machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            PipelineError::InvalidInput(_) => "invalid-input",
            PipelineError::EmptyContext(_) => "empty-context",
            PipelineError::Planning(_) => "planning",
            PipelineError::Backend(_) => "backend",
            PipelineError::Store(_) => "store",
            PipelineError::Transcript { .. } => "io",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AskOptions {
    pub validate: bool,
    pub ablation: Option<Ablation>,
    /// Transcript id; derived from the question and options when absent.
    pub transcript_id: Option<String>,
}

impl AskOptions {
    pub fn full() -> Self {
        Self { validate: true, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct AskOutcome {
    pub final_response: String,
    pub transcript: PipelineTranscript,
}

pub struct Pipeline {
    pub store: Arc<IssueStore>,
    pub backend: Arc<dyn ChatBackend>,
    pub embedder: Arc<dyn Embedder>,
    pub config: PipelineConfig,
}

fn default_id(question: &str, opts: &AskOptions) -> String {
    let mut h = Sha256::new();
    h.update(question.as_bytes());
    h.update([u8::from(opts.validate)]);
    h.update(opts.ablation.map(Ablation::as_str).unwrap_or("").as_bytes());
    hex::encode(&h.finalize()[..8])
}

impl Pipeline {
    pub fn new(
        store: Arc<IssueStore>,
        backend: Arc<dyn ChatBackend>,
        embedder: Arc<dyn Embedder>,
        config: PipelineConfig,
    ) -> Self {
        Self { store, backend, embedder, config }
    }

    fn preprocess_query(&self, question: &str, ablation: Option<Ablation>, session: &Session<'_>) -> TransformedQuery {
        let qtype = classify_type(question, session);
        let query = Query::new(question, qtype);
        if ablation == Some(Ablation::QueryPreprocessing) {
            return TransformedQuery {
                transformed_text: query.text.clone(),
                original: query,
                instruction_used: String::new(),
                by_backend: false,
                note: None,
            };
        }
        transform(&query, session)
    }

    pub fn ask(&self, question: &str, opts: &AskOptions) -> Result<AskOutcome, PipelineError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(PipelineError::InvalidInput("question is empty".into()));
        }
        let session = Session::new(self.backend.as_ref(), self.config.temperature);
        let embedder = self.embedder.as_ref();
        let raw = opts.ablation == Some(Ablation::IssuePreprocessing);
        let mut notes = Vec::new();

        let tq = self.preprocess_query(question, opts.ablation, &session);
        notes.extend(tq.note.clone());
        let qtype = tq.original.qtype;
        let text = tq.transformed_text.clone();

        let (store, corpus) = if raw {
            let records: Vec<_> = self.store.records().iter().map(|r| r.unprocessed()).collect();
            let store = IssueStore::in_memory();
            store.insert_many(records.clone())?;
            (Arc::new(store), Arc::new(Corpus::build(records, embedder)))
        } else {
            (self.store.clone(), self.store.corpus(embedder))
        };
        if corpus.is_empty() {
            return Err(PipelineError::EmptyContext("the issue store is empty".into()));
        }

        let plan = self.config.query_planning.then(|| match plan_query(&text, &session) {
            Ok(q) => match store.execute(&q) {
                Ok(rows) => PlanSection { query: Some(q), rows, failure: None },
                Err(e) => PlanSection { query: Some(q), rows: Vec::new(), failure: Some(e.to_string()) },
            },
            Err(e) => PlanSection { query: None, rows: Vec::new(), failure: Some(e.to_string()) },
        });
        if let Some(f) = plan.as_ref().and_then(|p| p.failure.clone()) {
            notes.push(f);
        }

        let context = match retrieve(&text, &corpus, embedder, self.config.retrieval_k, self.config.snippet_budget) {
            Ok(c) => c,
            Err(RetrievalError::EmptyCorpus) => {
                return Err(PipelineError::EmptyContext("the issue store is empty".into()))
            }
            Err(RetrievalError::Embedding(e)) => return Err(PipelineError::Backend(e)),
            Err(e) => return Err(PipelineError::InvalidInput(e.to_string())),
        };
        let rows = plan.as_ref().map(|p| p.rows.as_slice()).unwrap_or_default();
        if context.is_empty() && rows.is_empty() {
            if let Some(p) = &plan {
                if p.failure.is_some() {
                    let problem = p.failure.clone().unwrap_or_default();
                    return Err(PipelineError::Planning(PlanningError::Unparseable(problem)));
                }
            }
        }
        let context = context.with_rows(rows);

        let initial = answer(&text, &context, &session)?;
        if initial.low_confidence {
            notes.push("no issue matched the question; answer has low confidence".into());
        }

        let validation = opts.validate.then(|| {
            let settings = ValidatorSettings {
                threshold: self.config.similarity_threshold,
                cove_enabled: self.config.cove_enabled && opts.ablation != Some(Ablation::Cove),
                mt_enabled: self.config.mt_enabled && opts.ablation != Some(Ablation::Mt),
            };
            let validator =
                Validator { session: &session, embedder, context: &context.rendered_prompt_context, settings };
            validator.validate(question, qtype, &initial.text)
        });
        let final_response = validation.as_ref().map(|v| v.final_response.clone()).unwrap_or_else(|| initial.text.clone());

        let transcript = PipelineTranscript {
            id: opts.transcript_id.clone().unwrap_or_else(|| default_id(question, opts)),
            question: question.to_string(),
            validate: opts.validate,
            ablation: opts.ablation.map(|a| a.to_string()),
            query: QuerySection {
                original: question.to_string(),
                qtype,
                referenced_issues: tq.original.referenced_issues.clone(),
                transformed: text,
                instruction_used: tq.instruction_used,
                transformed_by_backend: tq.by_backend,
            },
            plan,
            retrieval: RetrievalSection {
                raw_records: raw,
                hits: context.hits.clone(),
                rendered_context: context.rendered_prompt_context.clone(),
            },
            answer: AnswerSection {
                template_id: initial.template_id.to_string(),
                response: initial.text,
                low_confidence: initial.low_confidence,
            },
            validation,
            final_response: final_response.clone(),
            notes,
            exchanges: session.into_exchanges(),
        };
        if let Some(dir) = &self.config.transcript_dir {
            write_transcript(dir, &transcript)?;
        }
        Ok(AskOutcome { final_response, transcript })
    }

    /// Answers and grades every pair. A pair whose pipeline run fails is
    /// graded incorrect with the error recorded; the run continues.
    pub fn run_benchmark(&self, pairs: &[BenchmarkPair], opts: &AskOptions) -> BenchmarkRun {
        let mut results = Vec::with_capacity(pairs.len());
        let mut transcripts = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let pair_opts = AskOptions { transcript_id: Some(pair.id.clone()), ..opts.clone() };
            match self.ask(&pair.question, &pair_opts) {
                Ok(outcome) => {
                    let session = Session::new(self.backend.as_ref(), self.config.temperature);
                    let graded =
                        grade(pair, &outcome.final_response, self.embedder.as_ref(), &session, self.config.similarity_threshold);
                    let mut transcript = outcome.transcript;
                    let offset = transcript.exchanges.len();
                    transcript.exchanges.extend(session.into_exchanges().into_iter().map(|mut e| {
                        e.seq += offset;
                        e
                    }));
                    results.push(graded);
                    transcripts.push(transcript);
                }
                Err(e) => {
                    tracing::warn!(pair = %pair.id, error = %e, "pipeline failed; graded incorrect");
                    results.push(GradedResult {
                        pair_id: pair.id.clone(),
                        task: pair.task,
                        qtype: pair.qtype,
                        response: String::new(),
                        correct: false,
                        score: None,
                        grading_mode: grading_mode_for(pair.qtype),
                        error: Some(format!("{}: {e}", e.class())),
                    });
                }
            }
        }
        BenchmarkRun { results, transcripts }
    }
}

fn grading_mode_for(qtype: QueryType) -> GradingMode {
    match qtype {
        QueryType::YN => GradingMode::Yn,
        QueryType::Fact => GradingMode::FactDirect,
        QueryType::Summary => GradingMode::Summary,
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub results: Vec<GradedResult>,
    pub transcripts: Vec<PipelineTranscript>,
}

/// Writes `<dir>/<id>.json`, replacing any earlier transcript with that id.
pub fn write_transcript(dir: &Path, transcript: &PipelineTranscript) -> Result<(), PipelineError> {
    let path = dir.join(format!("{}.json", transcript.id));
    let err = |message: String| PipelineError::Transcript { path: path.display().to_string(), message };
    std::fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(transcript).map_err(|e| err(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| err(e.to_string()))
}
