//! Benchmark grading, correctness reports, threshold sweeps and parser
//! accuracy.

mod correctness;
mod grading;
mod parser;
mod report;
mod sweep;

pub use correctness::{correctness, percent_tenths, CellReport, CorrectnessReport, GroupReport, Percent};
pub use grading::{
    fact_elements, grade, grade_fact, grade_summary, grade_yn, phrase_polarity, rule_label, YnLabel,
};
pub use parser::{parser_accuracy, GoldenElement, GoldenTrace, ParserAccuracy, TraceTally};
pub use report::render_table;
pub use sweep::{sweep_scores, threshold_sweep, SweepPoint, SWEEP_THRESHOLDS};

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::query::{QueryType, TaskType};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPair {
    pub id: String,
    pub question: String,
    pub expected: String,
    pub qtype: QueryType,
    pub task: TaskType,
    pub repo: String,
}

impl BenchmarkPair {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("pair {}: empty question", self.id));
        }
        if self.qtype == QueryType::YN && YnLabel::from_expected(&self.expected).is_none() {
            return Err(format!("pair {}: YN expected answer must be Yes or No, got {:?}", self.id, self.expected));
        }
        Ok(())
    }
}

/// Reads a JSON-lines benchmark. Ids must be unique.
pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkPair>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse { path: path.display().to_string(), line: i + 1, message };
        let pair: BenchmarkPair = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        pair.validate().map_err(err)?;
        if !seen.insert(pair.id.clone()) {
            return Err(err(format!("duplicate pair id {}", pair.id)));
        }
        out.push(pair);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradingMode {
    Yn,
    FactDirect,
    FactSimilarity,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedResult {
    pub pair_id: String,
    pub task: TaskType,
    pub qtype: QueryType,
    pub response: String,
    pub correct: bool,
    /// Cosine score; present iff a similarity mode was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub grading_mode: GradingMode,
    /// Pipeline failure that made the response empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
