//! Correctness of similarity-graded pairs as the threshold varies.

use serde::{Deserialize, Serialize};

use super::correctness::{percent_tenths, Percent};
use super::grading::{fact_elements, grade_summary};
use super::{BenchmarkPair, EvalError};
use crate::llm::{cosine, Embedder};
use crate::query::QueryType;

/// Thresholds 0.60 to 0.95 in steps of 0.05.
pub const SWEEP_THRESHOLDS: [f64; 8] = [0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub correct: u64,
    pub total: u64,
    pub percent: Percent,
}

fn check_thresholds(thresholds: &[f64]) -> Result<(), EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::InvalidInput("no thresholds given".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidInput(format!("thresholds must be finite and strictly increasing: {thresholds:?}")));
    }
    Ok(())
}

/// Counts, per threshold, how many scores reach it.
pub fn sweep_scores(scores: &[f64], thresholds: &[f64]) -> Result<Vec<SweepPoint>, EvalError> {
    check_thresholds(thresholds)?;
    if scores.is_empty() {
        return Err(EvalError::InvalidInput("no similarity-graded scores to sweep".into()));
    }
    let total = scores.len() as u64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let correct = scores.iter().filter(|&&s| s >= t).count() as u64;
            SweepPoint { threshold: t, correct, total, percent: Percent { tenths: percent_tenths(correct, total) } }
        })
        .collect())
}

/// Sweeps the pairs graded by similarity: summaries, and fact pairs whose
/// expected answer has no key elements. `responses` aligns with `pairs`.
pub fn threshold_sweep(
    pairs: &[BenchmarkPair],
    responses: &[String],
    embedder: &dyn Embedder,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, EvalError> {
    if pairs.len() != responses.len() {
        return Err(EvalError::InvalidInput(format!("{} pairs but {} responses", pairs.len(), responses.len())));
    }
    let mut scores = Vec::new();
    for (pair, response) in pairs.iter().zip(responses) {
        let similarity_graded = match pair.qtype {
            QueryType::YN => false,
            QueryType::Fact => fact_elements(&pair.expected).is_empty(),
            QueryType::Summary => true,
        };
        if !similarity_graded {
            continue;
        }
        let score = if pair.qtype == QueryType::Summary {
            grade_summary(response, &pair.expected, embedder, 1.0).1
        } else {
            match (embedder.embed(response), embedder.embed(&pair.expected)) {
                (Ok(a), Ok(b)) => cosine(&a, &b).unwrap_or(0.0),
                _ => 0.0,
            }
        };
        scores.push(score);
    }
    sweep_scores(&scores, thresholds)
}
