//! Records of every model exchange made while answering a question.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::llm::{ChatBackend, ChatMessage, ChatRequest, LlmError};
use crate::query::QueryType;
use crate::retrieval::Hit;
use crate::store::{ProjectedRow, StructuredQuery};

/// Pipeline stage that issued a backend call. The variant order is the
/// order in which stages run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Transform,
    Plan,
    Answer,
    CoveFollowups,
    CoveAnswers,
    CoveSynthesis,
    MtMutate,
    MtAnswers,
    MtRephrase,
    /// Zero-shot grading during evaluation.
    Grade,
}

impl Stage {
    /// Coarse section a stage belongs to.
    pub fn section(self) -> Section {
        match self {
            Stage::Classify | Stage::Transform => Section::Query,
            Stage::Plan => Section::Plan,
            Stage::Answer => Section::Answer,
            Stage::CoveFollowups | Stage::CoveAnswers | Stage::CoveSynthesis => Section::Cove,
            Stage::MtMutate | Stage::MtAnswers | Stage::MtRephrase => Section::Mt,
            Stage::Grade => Section::Grade,
        }
    }
}

/// Transcript sections in pipeline order. Retrieval makes no backend calls
/// but has its own section in [`PipelineTranscript`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Query,
    Plan,
    Retrieval,
    Answer,
    Cove,
    Mt,
    Grade,
}

impl Section {
    /// Sections produced by answering a question, in pipeline order.
    pub const PIPELINE: [Section; 6] =
        [Section::Query, Section::Plan, Section::Retrieval, Section::Answer, Section::Cove, Section::Mt];
}

/// One backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub seq: usize,
    pub stage: Stage,
    pub template_id: String,
    pub fingerprint: String,
    pub prompt: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Issues backend calls and records each one as an [`Exchange`].
///
/// Batched calls may run concurrently but are recorded in input order.
pub struct Session<'a> {
    backend: &'a dyn ChatBackend,
    temperature: f64,
    exchanges: Mutex<Vec<Exchange>>,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn ChatBackend, temperature: f64) -> Self {
        Self { backend, temperature, exchanges: Mutex::new(Vec::new()) }
    }

    fn request(&self, messages: Vec<ChatMessage>) -> Result<ChatRequest, LlmError> {
        ChatRequest::new(messages, self.backend.model_id())?.with_temperature(self.temperature)
    }

    fn record(&self, stage: Stage, template_id: &str, messages: Vec<ChatMessage>, result: &Result<String, LlmError>) {
        let fingerprint = crate::llm::fingerprint_messages(messages.iter().map(|m| (m.role, m.text.as_str())));
        let mut log = self.exchanges.lock().expect("exchange log poisoned");
        let seq = log.len();
        log.push(Exchange {
            seq,
            stage,
            template_id: template_id.to_string(),
            fingerprint,
            prompt: messages,
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        });
    }

    pub fn call(&self, stage: Stage, template_id: &str, messages: Vec<ChatMessage>) -> Result<String, LlmError> {
        let result = self.request(messages.clone()).and_then(|r| self.backend.complete(&r));
        self.record(stage, template_id, messages, &result);
        result
    }

    /// Runs independent calls concurrently; results and exchanges keep the
    /// order of `batch`.
    pub fn call_batch(
        &self,
        stage: Stage,
        template_id: &str,
        batch: Vec<Vec<ChatMessage>>,
    ) -> Vec<Result<String, LlmError>> {
        let results: Vec<Result<String, LlmError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|messages| {
                    let messages = messages.clone();
                    scope.spawn(move || self.request(messages).and_then(|r| self.backend.complete(&r)))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(LlmError::Transport { message: "backend call panicked".into(), retriable: false })
                    })
                })
                .collect()
        });
        for (messages, result) in batch.into_iter().zip(&results) {
            self.record(stage, template_id, messages, result);
        }
        results
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.exchanges.lock().expect("exchange log poisoned").clone()
    }

    pub fn into_exchanges(self) -> Vec<Exchange> {
        self.exchanges.into_inner().expect("exchange log poisoned")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Contradiction,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Votes {
    pub affirm: usize,
    pub deny: usize,
    pub abstain: usize,
}

impl Votes {
    pub fn total(&self) -> usize {
        self.affirm + self.deny + self.abstain
    }
}

/// Outcome of one consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    pub verdict: Verdict,
    pub polarity_votes: Votes,
    /// Cosine scores used, in the order they were computed.
    #[serde(default)]
    pub similarity_scores: Vec<f64>,
}

/// What happened to one validation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Skipped,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTranscript {
    pub initial_question: String,
    pub initial_response: String,
    pub cove_status: StageStatus,
    pub cove_followups: Vec<QaPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cove_adjudication: Option<Adjudication>,
    pub cove_intermediate: String,
    pub mt_status: StageStatus,
    pub mt_mutations: Vec<QaPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mt_adjudication: Option<Adjudication>,
    pub final_response: String,
    pub adjudication_notes: Vec<String>,
}

/// The query-preprocessing section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySection {
    pub original: String,
    pub qtype: QueryType,
    pub referenced_issues: Vec<u64>,
    pub transformed: String,
    pub instruction_used: String,
    pub transformed_by_backend: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<StructuredQuery>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<ProjectedRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSection {
    /// True when records were used without structured preprocessing.
    pub raw_records: bool,
    pub hits: Vec<Hit>,
    pub rendered_context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSection {
    pub template_id: String,
    pub response: String,
    pub low_confidence: bool,
}

/// Full record of one question through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTranscript {
    pub id: String,
    pub question: String,
    pub validate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<String>,
    pub query: QuerySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSection>,
    pub retrieval: RetrievalSection,
    pub answer: AnswerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationTranscript>,
    pub final_response: String,
    pub notes: Vec<String>,
    pub exchanges: Vec<Exchange>,
}

impl PipelineTranscript {
    pub fn exchanges_in(&self, section: Section) -> impl Iterator<Item = &Exchange> {
        self.exchanges.iter().filter(move |e| e.stage.section() == section)
    }

    /// JSON rendering of one section, used to compare runs section by
    /// section. Exchange sequence numbers are dropped since they shift when
    /// an earlier stage is skipped.
    pub fn section_json(&self, section: Section) -> serde_json::Value {
        use serde_json::json;
        let exchanges: Vec<serde_json::Value> = self
            .exchanges_in(section)
            .map(|e| {
                let mut v = serde_json::to_value(e).unwrap_or_default();
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("seq");
                }
                v
            })
            .collect();
        let v = self.validation.as_ref();
        let body = match section {
            Section::Query => json!(self.query),
            Section::Plan => json!(self.plan),
            Section::Retrieval => json!(self.retrieval),
            Section::Answer => json!(self.answer),
            Section::Cove => json!(v.map(|v| json!({
                "status": v.cove_status,
                "followups": v.cove_followups,
                "adjudication": v.cove_adjudication,
                "intermediate": v.cove_intermediate,
            }))),
            Section::Mt => json!(v.map(|v| json!({
                "status": v.mt_status,
                "mutations": v.mt_mutations,
                "adjudication": v.mt_adjudication,
                "final": v.final_response,
            }))),
            Section::Grade => serde_json::Value::Null,
        };
        json!({ "body": body, "exchanges": exchanges })
    }
}
