//! Stack-trace parsing: lexed lines are turned into grammar elements.

use std::sync::LazyLock;

use regex::Regex;

use super::auxiliary::clean_line;
use super::lexer::{lex_line, LineToken};
use super::{ElementKind, StackTrace, TraceElement};

/// Result of parsing one candidate region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOutcome {
    pub trace: Option<StackTrace>,
    /// Non-blank lines the lexer could not classify.
    pub skipped_lines: usize,
    pub notes: Vec<String>,
}

static FOREIGN_TRACE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^\s*(?:Traceback \(most recent call last\):|goroutine \d+ \[|File "[^"]+", line \d+|thread '[^']*' panicked at)"#)
        .expect("foreign trace regex")
});

#[derive(Default)]
struct Builder {
    elements: Vec<TraceElement>,
    depth: u32,
    frames: u32,
    headers: usize,
    skipped: usize,
}

impl Builder {
    fn push(&mut self, kind: ElementKind, value: &str, frame_index: Option<u32>) {
        self.elements.push(TraceElement {
            kind,
            value: value.to_string(),
            frame_index,
            chain_depth: self.depth,
        });
    }

    fn accept(&mut self, token: LineToken<'_>) {
        match token {
            LineToken::ExceptionHeader { type_name, message, nested } => {
                if nested && !self.elements.is_empty() {
                    self.depth += 1;
                }
                self.headers += 1;
                self.push(ElementKind::ExceptionType, type_name, None);
                if let Some(msg) = message {
                    self.push(ElementKind::ExceptionMessage, msg, None);
                }
            }
            LineToken::Frame { class, method, file, line } => {
                let idx = Some(self.frames);
                self.frames += 1;
                self.push(ElementKind::ClassElem, class, idx);
                self.push(ElementKind::MethodElem, method, idx);
                if let Some(file) = file {
                    self.push(ElementKind::FileElem, file, idx);
                    if let Some(line) = line {
                        self.push(ElementKind::LineElem, line, idx);
                    }
                }
            }
            LineToken::Elided => {}
            LineToken::Other => {}
        }
    }
}

/// Parses `text` as a single JVM stack trace.
///
/// Noise is stripped line by line first. Returns no trace when neither an
/// exception header nor a frame line is present.
pub fn parse_stack_trace(text: &str) -> ParseOutcome {
    let mut b = Builder::default();
    let mut notes = Vec::new();
    for line in text.split('\n') {
        let Some(cleaned) = clean_line(line) else { continue };
        let token = lex_line(&cleaned);
        if matches!(token, LineToken::Other) {
            if !cleaned.trim().is_empty() {
                b.skipped += 1;
                if FOREIGN_TRACE.is_match(&cleaned) && notes.is_empty() {
                    notes.push("non-JVM stack trace syntax skipped".to_string());
                }
            }
            continue;
        }
        b.accept(token);
    }
    let trace = (b.headers > 0 || b.frames > 0)
        .then(|| StackTrace { elements: b.elements, raw_text: text.to_string() });
    ParseOutcome { trace, skipped_lines: b.skipped, notes }
}

/// Lines of noise tolerated inside one trace region before it is closed.
const MAX_GAP: usize = 2;

/// Finds every trace region in free text (prose or a code block) and parses
/// each one. A region's `raw_text` is the exact slice from its first to its
/// last recognized line.
///
/// A region closes after more than [`MAX_GAP`] unrecognized non-blank lines,
/// or when a top-level exception header follows frames (a new trace).
pub fn find_traces(text: &str) -> (Vec<StackTrace>, ParseOutcome) {
    let mut regions: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut seen_frame = false;
    let mut gap = 0;
    let mut offset = 0;
    let mut foreign = false;

    for raw in text.split('\n') {
        let start = offset;
        let end = offset + raw.len();
        offset = end + 1;
        let Some(cleaned) = clean_line(raw) else { continue };
        let token = lex_line(&cleaned);
        match token {
            LineToken::Other => {
                if FOREIGN_TRACE.is_match(&cleaned) {
                    foreign = true;
                }
                if cleaned.trim().is_empty() {
                    continue;
                }
                gap += 1;
                if gap > MAX_GAP {
                    if let Some(r) = current.take() {
                        regions.push(r);
                    }
                }
            }
            LineToken::ExceptionHeader { nested: false, .. } if current.is_some() && seen_frame => {
                regions.push(current.take().expect("checked is_some"));
                current = Some((start, end));
                seen_frame = false;
                gap = 0;
            }
            LineToken::Elided if current.is_none() => {}
            _ => {
                if matches!(token, LineToken::Frame { .. }) {
                    seen_frame = true;
                }
                match current.as_mut() {
                    Some(r) => r.1 = end,
                    None => {
                        current = Some((start, end));
                        seen_frame = matches!(token, LineToken::Frame { .. });
                    }
                }
                gap = 0;
            }
        }
    }
    if let Some(r) = current {
        regions.push(r);
    }

    let mut summary = ParseOutcome { trace: None, skipped_lines: 0, notes: Vec::new() };
    if foreign {
        summary.notes.push("non-JVM stack trace syntax skipped".to_string());
    }
    let mut traces = Vec::new();
    for (s, e) in regions {
        let outcome = parse_stack_trace(&text[s..e]);
        summary.skipped_lines += outcome.skipped_lines;
        if let Some(t) = outcome.trace {
            traces.push(t);
        }
    }
    (traces, summary)
}
