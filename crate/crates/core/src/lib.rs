//! Question answering over bug reports with inaccuracy mitigation.
//!
//! The crate is organized as a pipeline:
//!
//! - [`ingest`] pulls issue reports from a GitHub-style REST API or local JSON.
//! - [`issue`] cleans crash-dump noise, separates code blocks from prose and
//!   parses JVM stack traces into grammar-checked element sequences.
//! - [`store`] keeps the structured records and answers structured queries,
//!   including ones planned from natural language by the model.
//! - [`query`] classifies and rewrites the user question.
//! - [`retrieval`] selects grounding context and produces the initial answer.
//! - [`validator`] verifies the answer with follow-up questions and then with
//!   metamorphic rephrasings of the original question.
//! - [`eval`] grades answers against a benchmark and measures parser accuracy.
//! - [`pipeline`] wires everything together for the CLI and HTTP service.

pub mod config;
pub mod eval;
pub mod http;
pub mod ingest;
pub mod issue;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod query;
pub mod retrieval;
pub mod store;
pub mod text;
pub mod transcript;
pub mod validator;

pub use config::PipelineConfig;
pub use issue::{
    ElementKind, IssueKey, IssueRecord, IssueState, RawIssue, StackTrace, TraceElement,
};
pub use llm::{
    ChatBackend, ChatMessage, ChatRequest, Embedder, EmbeddingVector, HashedBowEmbedder,
    LlmError, Role, ScriptedBackend,
};
pub use pipeline::{Ablation, AskOptions, AskOutcome, Pipeline, PipelineError};
pub use query::{QueryType, TaskType};
pub use store::{IssueStore, StructuredQuery};
pub use transcript::{Exchange, PipelineTranscript, Stage, ValidationTranscript};
