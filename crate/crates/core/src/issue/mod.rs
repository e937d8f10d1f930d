//! Issue report preprocessing: noise stripping, code/prose separation and
//! JVM stack-trace parsing.

mod auxiliary;
mod fences;
pub mod grammar;
mod lexer;
mod preprocess;
mod trace;

pub use auxiliary::{clean_line, strip_auxiliary};
pub use fences::{separate_code_blocks, CodeSplit};
pub use lexer::{lex_line, LineToken};
pub use preprocess::preprocess;
pub use trace::{find_traces, parse_stack_trace, ParseOutcome};

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueState {
    Open,
    Closed,
}

impl IssueState {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueState::Open => "open",
            IssueState::Closed => "closed",
        }
    }
}

impl std::str::FromStr for IssueState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open" => Ok(IssueState::Open),
            "closed" => Ok(IssueState::Closed),
            other => Err(format!("unknown issue state {other:?}")),
        }
    }
}

/// Identity of an issue within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IssueKey {
    pub repo: String,
    pub number: u64,
}

impl IssueKey {
    pub fn new(repo: impl Into<String>, number: u64) -> Self {
        Self { repo: repo.into(), number }
    }
}

impl fmt::Display for IssueKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.repo, self.number)
    }
}

/// An issue as fetched from the tracker, before any processing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawIssue {
    pub repo: String,
    pub number: u64,
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub assignees: Vec<String>,
    pub state: IssueState,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default)]
    pub comments: Vec<String>,
}

impl RawIssue {
    pub fn key(&self) -> IssueKey {
        IssueKey::new(self.repo.clone(), self.number)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    ExceptionType,
    ExceptionMessage,
    ClassElem,
    MethodElem,
    FileElem,
    LineElem,
}

impl ElementKind {
    pub const ALL: [ElementKind; 6] = [
        ElementKind::ExceptionType,
        ElementKind::ExceptionMessage,
        ElementKind::ClassElem,
        ElementKind::MethodElem,
        ElementKind::FileElem,
        ElementKind::LineElem,
    ];

    pub fn is_code_detail(self) -> bool {
        !matches!(self, ElementKind::ExceptionType | ElementKind::ExceptionMessage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceElement {
    pub kind: ElementKind,
    pub value: String,
    /// Groups the code details of one frame; `None` for exception elements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u32>,
    /// 0 for the outermost exception, +1 per `Caused by:` segment.
    pub chain_depth: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackTrace {
    pub elements: Vec<TraceElement>,
    pub raw_text: String,
}

impl StackTrace {
    pub fn kinds(&self) -> Vec<ElementKind> {
        self.elements.iter().map(|e| e.kind).collect()
    }

    pub fn values_of(&self, kind: ElementKind) -> impl Iterator<Item = &str> {
        self.elements.iter().filter(move |e| e.kind == kind).map(|e| e.value.as_str())
    }

    pub fn exception_types(&self) -> impl Iterator<Item = &str> {
        self.values_of(ElementKind::ExceptionType)
    }

    /// `Type: message` header for each exception in the chain.
    pub fn exception_headers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.elements {
            match e.kind {
                ElementKind::ExceptionType => out.push(e.value.clone()),
                ElementKind::ExceptionMessage => {
                    if let Some(last) = out.last_mut() {
                        last.push_str(": ");
                        last.push_str(&e.value);
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Frames as `(class, method, file, line)`, in source order.
    pub fn frames(&self) -> Vec<Frame<'_>> {
        let mut out: Vec<Frame<'_>> = Vec::new();
        for e in self.elements.iter().filter(|e| e.kind.is_code_detail()) {
            let idx = e.frame_index.unwrap_or_default();
            if out.last().map(|f| f.index) != Some(idx) {
                out.push(Frame { index: idx, chain_depth: e.chain_depth, ..Frame::default() });
            }
            let frame = out.last_mut().expect("frame pushed above");
            match e.kind {
                ElementKind::ClassElem => frame.class = Some(&e.value),
                ElementKind::MethodElem => frame.method = Some(&e.value),
                ElementKind::FileElem => frame.file = Some(&e.value),
                ElementKind::LineElem => frame.line = Some(&e.value),
                _ => unreachable!("filtered to code details"),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Frame<'a> {
    pub index: u32,
    pub chain_depth: u32,
    pub class: Option<&'a str>,
    pub method: Option<&'a str>,
    pub file: Option<&'a str>,
    pub line: Option<&'a str>,
}

impl fmt::Display for Frame<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at {}.{}", self.class.unwrap_or("?"), self.method.unwrap_or("?"))?;
        match (self.file, self.line) {
            (Some(file), Some(line)) => write!(f, "({file}:{line})"),
            (Some(file), None) => write!(f, "({file})"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordDiagnostics {
    /// Non-blank lines inside trace regions the lexer did not recognize.
    pub skipped_lines: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// A preprocessed issue, ready for the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub repo: String,
    pub number: u64,
    pub title: String,
    pub state: IssueState,
    pub labels: Vec<String>,
    pub assignees: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    /// Original body, kept so the record can be rendered back to a [`RawIssue`].
    pub body: String,
    pub comments: Vec<String>,
    /// Body with fenced code blocks removed.
    pub prose_text: String,
    pub code_blocks: Vec<String>,
    pub stack_traces: Vec<StackTrace>,
    #[serde(default)]
    pub diagnostics: RecordDiagnostics,
}

impl IssueRecord {
    pub fn key(&self) -> IssueKey {
        IssueKey::new(self.repo.clone(), self.number)
    }

    pub fn to_raw(&self) -> RawIssue {
        RawIssue {
            repo: self.repo.clone(),
            number: self.number,
            title: self.title.clone(),
            body: self.body.clone(),
            labels: self.labels.clone(),
            assignees: self.assignees.clone(),
            state: self.state,
            created_at: self.created_at,
            updated_at: self.updated_at,
            comments: self.comments.clone(),
        }
    }

    /// The record as it would look with no preprocessing at all: raw body as
    /// prose, nothing separated, nothing parsed.
    pub fn unprocessed(&self) -> IssueRecord {
        IssueRecord {
            prose_text: self.body.clone(),
            code_blocks: Vec::new(),
            stack_traces: Vec::new(),
            diagnostics: RecordDiagnostics::default(),
            ..self.clone()
        }
    }

    pub fn exception_types(&self) -> impl Iterator<Item = &str> {
        self.stack_traces.iter().flat_map(StackTrace::exception_types)
    }
}
