//! Context selection and the grounded initial answer.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::issue::{IssueKey, IssueRecord};
use crate::llm::{cosine, Embedder, LlmError};
use crate::prompts::RAG_ANSWER;
use crate::store::{Corpus, ProjectedRow};
use crate::text::{referenced_issue_numbers, truncate_chars};
use crate::transcript::{Session, Stage};

/// Characters of prose included in a snippet.
pub const PROSE_PREFIX_CHARS: usize = 1200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub key: IssueKey,
    pub score: f64,
    /// Included because the question names the issue.
    pub forced: bool,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub hits: Vec<Hit>,
    pub rendered_prompt_context: String,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RetrievalError {
    #[error("empty context: the issue corpus is empty")]
    EmptyCorpus,
    #[error("retrieval k must be at least 1")]
    ZeroK,
    #[error("could not embed the question: {0}")]
    Embedding(#[from] LlmError),
}

/// Snippet text: title, the first [`PROSE_PREFIX_CHARS`] characters of
/// prose, each trace's exception headers and top frame; capped at `budget`
/// characters.
pub fn render_snippet(record: &IssueRecord, budget: usize) -> String {
    let mut s = String::new();
    s.push_str(record.title.trim());
    let prose = record.prose_text.trim();
    if !prose.is_empty() {
        s.push('\n');
        s.push_str(truncate_chars(prose, PROSE_PREFIX_CHARS));
    }
    for trace in &record.stack_traces {
        for header in trace.exception_headers() {
            s.push('\n');
            s.push_str(&header);
        }
        if let Some(top) = trace.frames().first() {
            s.push_str("\n  ");
            s.push_str(&top.to_string());
        }
    }
    truncate_chars(&s, budget).to_string()
}

/// Similarity-ranked order: score descending, then key ascending.
pub fn rank_order(a: &(f64, &IssueKey), b: &(f64, &IssueKey)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

/// Selects up to `k` records: issues named in the question first (in order
/// of mention, every repository), then the most similar remaining records.
/// Named issues are never dropped, even past `k`.
pub fn retrieve(
    question: &str,
    corpus: &Corpus,
    embedder: &dyn Embedder,
    k: usize,
    snippet_budget: usize,
) -> Result<RetrievedContext, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let q = embedder.embed(question)?;
    let scores: Vec<Option<f64>> =
        corpus.embeddings.iter().map(|e| e.as_ref().and_then(|e| cosine(&q, e).ok())).collect();

    let mut chosen = vec![false; corpus.len()];
    let mut hits = Vec::new();
    let mut push = |i: usize, forced: bool, chosen: &mut Vec<bool>| {
        chosen[i] = true;
        let r = &corpus.records[i];
        hits.push(Hit {
            key: r.key(),
            score: scores[i].unwrap_or(0.0),
            forced,
            snippet: render_snippet(r, snippet_budget),
        });
    };

    for n in referenced_issue_numbers(question) {
        let mut idx: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.records[i].number == n && !chosen[i]).collect();
        idx.sort_by(|&a, &b| corpus.records[a].key().cmp(&corpus.records[b].key()));
        for i in idx {
            push(i, true, &mut chosen);
        }
    }

    let mut ranked: Vec<(f64, usize)> =
        (0..corpus.len()).filter(|&i| !chosen[i]).filter_map(|i| scores[i].map(|s| (s, i))).collect();
    let keys: Vec<IssueKey> = corpus.records.iter().map(IssueRecord::key).collect();
    ranked.sort_by(|a, b| rank_order(&(a.0, &keys[a.1]), &(b.0, &keys[b.1])));
    let room = k.saturating_sub(chosen.iter().filter(|c| **c).count());
    for &(_, i) in ranked.iter().take(room) {
        push(i, false, &mut chosen);
    }

    let rendered_prompt_context = render_context(&hits, &[]);
    Ok(RetrievedContext { hits, rendered_prompt_context })
}

/// Prompt context: one block per hit, then structured query rows if any.
pub fn render_context(hits: &[Hit], rows: &[ProjectedRow]) -> String {
    let mut blocks: Vec<String> = hits.iter().map(|h| format!("[{}]\n{}", h.key, h.snippet)).collect();
    if !rows.is_empty() {
        let lines: Vec<String> = rows
            .iter()
            .map(|r| format!("{} {}", r.key, serde_json::to_string(&r.fields).unwrap_or_default()))
            .collect();
        blocks.push(format!("[query results]\n{}", lines.join("\n")));
    }
    if blocks.is_empty() {
        "(no matching issues)".to_string()
    } else {
        blocks.join("\n\n")
    }
}

impl RetrievedContext {
    pub fn with_rows(mut self, rows: &[ProjectedRow]) -> Self {
        self.rendered_prompt_context = render_context(&self.hits, rows);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

/// The initial grounded answer. Low confidence when the context has no hits.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub text: String,
    pub template_id: &'static str,
    pub low_confidence: bool,
}

pub fn answer(question: &str, context: &RetrievedContext, session: &Session<'_>) -> Result<Answer, LlmError> {
    let messages = answer_prompt(question, &context.rendered_prompt_context);
    let text = session.call(Stage::Answer, RAG_ANSWER.id, messages)?;
    Ok(Answer { text, template_id: RAG_ANSWER.id, low_confidence: context.is_empty() })
}

pub fn answer_prompt(question: &str, rendered_context: &str) -> Vec<crate::llm::ChatMessage> {
    RAG_ANSWER.render(&[("context", rendered_context), ("question", question)])
}
