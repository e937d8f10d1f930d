//! Question classification and few-shot rewriting.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::prompts::{PromptTemplate, CLASSIFY_TYPE, TRANSFORM_FACT, TRANSFORM_SUMMARY, TRANSFORM_YN};
use crate::text::referenced_issue_numbers;
use crate::transcript::{Session, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryType {
    YN,
    Fact,
    Summary,
}

impl QueryType {
    pub const ALL: [QueryType; 3] = [QueryType::YN, QueryType::Fact, QueryType::Summary];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::YN => "YN",
            QueryType::Fact => "Fact",
            QueryType::Summary => "Summary",
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
            "yn" | "y/n" | "yes/no" => Ok(QueryType::YN),
            "fact" | "factual" => Ok(QueryType::Fact),
            "summary" => Ok(QueryType::Summary),
            other => Err(format!("unknown query type {other:?}")),
        }
    }
}

/// Benchmark task categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    /// Issue analytics over a single issue.
    T1S,
    /// Issue analytics over multiple issues.
    T1M,
    /// Issue trends.
    T2,
    /// Issue summaries.
    T3,
    /// Issue labeling.
    T4,
    /// Issue backlog.
    T5,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [TaskType::T1S, TaskType::T1M, TaskType::T2, TaskType::T3, TaskType::T4, TaskType::T5];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::T1S => "T1S",
            TaskType::T1M => "T1M",
            TaskType::T2 => "T2",
            TaskType::T3 => "T3",
            TaskType::T4 => "T4",
            TaskType::T5 => "T5",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub qtype: QueryType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskType>,
    pub referenced_issues: Vec<u64>,
}

impl Query {
    pub fn new(text: impl Into<String>, qtype: QueryType) -> Self {
        let text = text.into();
        let referenced_issues = referenced_issue_numbers(&text);
        Self { text, qtype, task: None, referenced_issues }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformedQuery {
    pub original: Query,
    pub transformed_text: String,
    /// Template id of the instruction used.
    pub instruction_used: String,
    /// False when the original text was kept.
    pub by_backend: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

static YN_LEAD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:is|are|was|were|does|do|did|has|have|can|could|should|will|would)\b")
        .expect("yn regex")
});

static SUMMARY_CUE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:summari[sz]e|summary|compare|comparison|overview)\b").expect("summary regex")
});

/// Type suggested by surface cues alone; `None` when the cues conflict.
pub fn heuristic_type(text: &str) -> Option<QueryType> {
    match (YN_LEAD.is_match(text), SUMMARY_CUE.is_match(text)) {
        (true, true) => None,
        (true, false) => Some(QueryType::YN),
        (false, true) => Some(QueryType::Summary),
        (false, false) => Some(QueryType::Fact),
    }
}

/// Classifies by heuristics, consulting the backend only when they
/// conflict. A failed or unreadable backend reply falls back to YN, since
/// the question opens like a yes/no question.
pub fn classify_type(text: &str, session: &Session<'_>) -> QueryType {
    if let Some(t) = heuristic_type(text) {
        return t;
    }
    session
        .call(Stage::Classify, CLASSIFY_TYPE.id, CLASSIFY_TYPE.render(&[("question", text)]))
        .ok()
        .and_then(|reply| reply.split_whitespace().next().and_then(|w| w.parse().ok()))
        .unwrap_or(QueryType::YN)
}

pub fn transform_template(qtype: QueryType) -> &'static PromptTemplate {
    match qtype {
        QueryType::YN => &TRANSFORM_YN,
        QueryType::Fact => &TRANSFORM_FACT,
        QueryType::Summary => &TRANSFORM_SUMMARY,
    }
}

/// Strips an echoed `Rewritten:` prefix and surrounding quotes.
fn clean_rewrite(reply: &str) -> String {
    let first = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default();
    let first = first.strip_prefix("Rewritten:").unwrap_or(first).trim();
    first.trim_matches('"').trim().to_string()
}

/// Rewrites the question with the per-type instruction. Best effort: on a
/// backend failure, an empty reply, or a reply that drops an issue number
/// of the original, the original text is kept.
pub fn transform(query: &Query, session: &Session<'_>) -> TransformedQuery {
    let template = transform_template(query.qtype);
    let keep = |note: String| TransformedQuery {
        original: query.clone(),
        transformed_text: query.text.clone(),
        instruction_used: template.id.to_string(),
        by_backend: false,
        note: Some(note),
    };
    let reply = match session.call(Stage::Transform, template.id, template.render(&[("question", &query.text)])) {
        Ok(r) => r,
        Err(e) => return keep(format!("query transformation failed, original kept: {e}")),
    };
    let rewritten = clean_rewrite(&reply);
    if rewritten.is_empty() {
        return keep("query transformation returned nothing, original kept".into());
    }
    let present = referenced_issue_numbers(&rewritten);
    if let Some(lost) = query.referenced_issues.iter().find(|n| !present.contains(n)) {
        return keep(format!("query transformation dropped issue {lost}, original kept"));
    }
    TransformedQuery {
        original: query.clone(),
        transformed_text: rewritten,
        instruction_used: template.id.to_string(),
        by_backend: true,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatRequest, ScriptEntry, ScriptedBackend};
    use proptest::prelude::*;

    fn backend(pairs: &[(QueryType, &str, &str)]) -> ScriptedBackend {
        ScriptedBackend::new(pairs.iter().map(|(t, q, a)| {
            let req = ChatRequest::new(transform_template(*t).render(&[("question", q)]), "scripted").unwrap();
            ScriptEntry::for_request(&req, *a)
        }))
        .unwrap()
    }

    #[test]
    fn classification_examples() {
        let b = ScriptedBackend::new([]).unwrap();
        let s = Session::new(&b, 0.0);
        assert_eq!(classify_type("Is there any issue similar to issue 100071?", &s), QueryType::YN);
        assert_eq!(classify_type("Summarize similarities between issues 103072 & 103344", &s), QueryType::Summary);
        assert_eq!(
            classify_type("What existing label is recommended for issues that need immediate triaging?", &s),
            QueryType::Fact
        );
        assert!(s.exchanges().is_empty());
    }

    #[test]
    fn conflicting_cues_consult_backend() {
        let q = "Can you summarize issue 18151?";
        let req = ChatRequest::new(CLASSIFY_TYPE.render(&[("question", q)]), "scripted").unwrap();
        let b = ScriptedBackend::new([ScriptEntry::for_request(&req, "Summary")]).unwrap();
        let s = Session::new(&b, 0.0);
        assert_eq!(classify_type(q, &s), QueryType::Summary);
        assert_eq!(s.exchanges().len(), 1);
        let offline = ScriptedBackend::new([]).unwrap();
        assert_eq!(classify_type(q, &Session::new(&offline, 0.0)), QueryType::YN);
    }

    #[test]
    fn similarity_rewrite() {
        let q = Query::new("Are issue 18102 and 18669 similar?", QueryType::YN);
        let expected = "Compare the exceptions, stack traces, and descriptions of issues 18102 and 18669 to determine similarity.";
        let b = backend(&[(QueryType::YN, &q.text, expected)]);
        let t = transform(&q, &Session::new(&b, 0.0));
        assert_eq!(t.transformed_text, expected);
        assert_eq!(t.instruction_used, "transform-yn/v1");
        assert!(t.by_backend);
    }

    #[test]
    fn team_rewrite_names_fields() {
        let q = Query::new("Which team is responsible for issue 104160?", QueryType::Fact);
        let b = backend(&[(
            QueryType::Fact,
            &q.text,
            "Summarize the team responsible for issue 104160 based on the assignee and labels.",
        )]);
        let t = transform(&q, &Session::new(&b, 0.0));
        assert!(t.transformed_text.contains("based on the assignee and labels"));
    }

    #[test]
    fn offline_falls_back_to_original() {
        let q = Query::new("Is issue 18151 open?", QueryType::YN);
        let b = ScriptedBackend::new([]).unwrap();
        let t = transform(&q, &Session::new(&b, 0.0));
        assert_eq!(t.transformed_text, q.text);
        assert!(!t.by_backend);
        assert!(t.note.is_some());
    }

    #[test]
    fn dropped_issue_number_keeps_original() {
        let q = Query::new("Are issue 18102 and 18669 similar?", QueryType::YN);
        let b = backend(&[(QueryType::YN, &q.text, "Compare issue 18102 with the other one.")]);
        let t = transform(&q, &Session::new(&b, 0.0));
        assert_eq!(t.transformed_text, q.text);
    }

    proptest! {
        /// Whatever the backend replies, referenced issue numbers survive.
        #[test]
        fn issue_numbers_survive(a in 1000u64..9_999_999, b in 1000u64..9_999_999, reply in "[a-z0-9 ]{0,40}") {
            let q = Query::new(format!("Are issue {a} and {b} related?"), QueryType::YN);
            let backend = backend(&[(QueryType::YN, &q.text, &reply)]);
            let t = transform(&q, &Session::new(&backend, 0.0));
            let present = referenced_issue_numbers(&t.transformed_text);
            for n in &q.referenced_issues {
                prop_assert!(present.contains(n));
            }
        }
    }
}
