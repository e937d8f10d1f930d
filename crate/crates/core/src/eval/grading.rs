//! Grading of one response against its expected answer.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BenchmarkPair, GradedResult, GradingMode};
use crate::llm::{cosine, Embedder};
use crate::prompts::GRADE_YN;
use crate::query::QueryType;
use crate::text::{normalize_whitespace, referenced_issue_numbers};
use crate::transcript::{Session, Stage};
use crate::validator::{is_uncertain, leading_polarity, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum YnLabel {
    Yes,
    No,
    Unclear,
}

impl YnLabel {
    /// Parses a benchmark's expected YN answer.
    pub fn from_expected(text: &str) -> Option<YnLabel> {
        match text.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
            "yes" | "y" => Some(YnLabel::Yes),
            "no" | "n" => Some(YnLabel::No),
            _ => None,
        }
    }
}

impl From<Polarity> for YnLabel {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Yes => YnLabel::Yes,
            Polarity::No => YnLabel::No,
        }
    }
}

static CLAUSE_END: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)[.;,!?\n]|\bbut\b|\bhowever\b").expect("clause regex"));

static NEGATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:not|no|never|none|neither|nor|cannot|unrelated|different)\b|n't\b",
    )
    .expect("negation regex")
});

static AFFIRMATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:is|are|was|were|does|do|did|has|have|had|can|will|indeed|both|correct|true)\b")
        .expect("affirmation regex")
});

/// Polarity from the phrasing of the first clause, for answers that do not
/// open with yes or no: a negation cue means No, otherwise an assertive
/// verb means Yes.
pub fn phrase_polarity(text: &str) -> Option<Polarity> {
    let text = text.trim();
    let end = CLAUSE_END.find(text).map(|m| m.start()).unwrap_or(text.len());
    let clause = &text[..end];
    if clause.trim().is_empty() {
        return None;
    }
    if NEGATION.is_match(clause) {
        Some(Polarity::No)
    } else if AFFIRMATION.is_match(clause) {
        Some(Polarity::Yes)
    } else {
        None
    }
}

/// Deterministic mapping of a free-form response to Yes/No/Unclear:
/// uncertainty phrases, then the leading token, then phrase cues.
pub fn rule_label(response: &str) -> YnLabel {
    if response.trim().is_empty() || is_uncertain(response) {
        return YnLabel::Unclear;
    }
    leading_polarity(response).or_else(|| phrase_polarity(response)).map(YnLabel::from).unwrap_or(YnLabel::Unclear)
}

/// Grades a YN response. Unclear responses are classified zero-shot by the
/// backend; still unclear means incorrect.
pub fn grade_yn(response: &str, expected: YnLabel, session: &Session<'_>) -> (bool, YnLabel) {
    let mut label = rule_label(response);
    if label == YnLabel::Unclear && !response.trim().is_empty() {
        label = session
            .call(Stage::Grade, GRADE_YN.id, GRADE_YN.render(&[("response", response)]))
            .ok()
            .and_then(|r| leading_polarity(&r).map(YnLabel::from))
            .unwrap_or(YnLabel::Unclear);
    }
    (label != YnLabel::Unclear && label == expected, label)
}

static ISSUE_LIST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bissues?\s*#?(\d+)((?:\s*(?:,|&|and)\s*#?\d+)*)").expect("issue list regex")
});
static HASH_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#(\d+)\b").expect("hash regex"));
static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("digits regex"));
static QUOTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"`([^`\s]{1,80})`|'([^'\s]{1,80})'|"([^"\s]{1,80})""#).expect("quoted regex"));
static LABEL_TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:^|[\s(\[,'`])([A-Za-z>][\w.>/-]*:[\w./>-]*[A-Za-z0-9])").expect("label regex")
});

/// Key elements of a fact answer: issue numbers (`#N`), quoted
/// identifiers and label-shaped `word:word` tokens, lowercased.
pub fn fact_elements(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for c in ISSUE_LIST.captures_iter(text) {
        out.insert(format!("#{}", &c[1]));
        if let Some(rest) = c.get(2) {
            for d in DIGITS.find_iter(rest.as_str()) {
                out.insert(format!("#{}", d.as_str()));
            }
        }
    }
    for c in HASH_NUMBER.captures_iter(text) {
        out.insert(format!("#{}", &c[1]));
    }
    for n in referenced_issue_numbers(text) {
        out.insert(format!("#{n}"));
    }
    for c in QUOTED.captures_iter(text) {
        let m = c.get(1).or_else(|| c.get(2)).or_else(|| c.get(3)).expect("one quote group");
        out.insert(m.as_str().to_lowercase());
    }
    for c in LABEL_TOKEN.captures_iter(text) {
        let t = &c[1];
        if !t.contains("://") {
            out.insert(t.to_lowercase());
        }
    }
    out
}

fn similarity(embedder: &dyn Embedder, a: &str, b: &str) -> f64 {
    match (embedder.embed(a), embedder.embed(b)) {
        (Ok(x), Ok(y)) => cosine(&x, &y).unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Direct comparison when the expected answer has key elements: every one
/// must appear among the response's elements (or, for non-numeric ones, in
/// its text). Otherwise cosine similarity against `threshold`.
pub fn grade_fact(response: &str, expected: &str, embedder: &dyn Embedder, threshold: f64) -> (bool, GradingMode, Option<f64>) {
    let want = fact_elements(expected);
    if want.is_empty() {
        let s = similarity(embedder, response, expected);
        return (s >= threshold, GradingMode::FactSimilarity, Some(s));
    }
    let have = fact_elements(response);
    let text = normalize_whitespace(response).to_lowercase();
    let ok = want.iter().all(|e| have.contains(e) || (!e.starts_with('#') && text.contains(e.as_str())));
    (ok, GradingMode::FactDirect, None)
}

/// Correct iff cosine reaches `threshold`; the score is always returned.
pub fn grade_summary(response: &str, expected: &str, embedder: &dyn Embedder, threshold: f64) -> (bool, f64) {
    let s = similarity(embedder, response, expected);
    (s >= threshold, s)
}

pub fn grade(
    pair: &BenchmarkPair,
    response: &str,
    embedder: &dyn Embedder,
    session: &Session<'_>,
    threshold: f64,
) -> GradedResult {
    let (correct, score, grading_mode) = match pair.qtype {
        QueryType::YN => {
            let expected = YnLabel::from_expected(&pair.expected).unwrap_or(YnLabel::Unclear);
            let (ok, _) = grade_yn(response, expected, session);
            (ok, None, GradingMode::Yn)
        }
        QueryType::Fact => {
            let (ok, mode, score) = grade_fact(response, &pair.expected, embedder, threshold);
            (ok, score, mode)
        }
        QueryType::Summary => {
            let (ok, s) = grade_summary(response, &pair.expected, embedder, threshold);
            (ok, Some(s), GradingMode::Summary)
        }
    };
    GradedResult {
        pair_id: pair.id.clone(),
        task: pair.task,
        qtype: pair.qtype,
        response: response.to_string(),
        correct,
        score,
        grading_mode,
        error: None,
    }
}
