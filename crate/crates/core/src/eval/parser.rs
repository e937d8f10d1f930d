//! Element-level precision and recall of the stack-trace parser against
//! hand labels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::issue::{ElementKind, TraceElement};
use crate::text::normalize_whitespace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenElement {
    pub kind: ElementKind,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenTrace {
    pub id: String,
    pub elements: Vec<GoldenElement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTally {
    pub id: String,
    pub matched: u64,
    pub parsed: u64,
    pub golden: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParserAccuracy {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No elements were parsed, so precision is reported as 1.0.
    pub precision_degenerate: bool,
    /// No golden elements exist, so recall is reported as 1.0.
    pub recall_degenerate: bool,
    pub matched: u64,
    pub parsed: u64,
    pub golden: u64,
    pub traces: Vec<TraceTally>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn matches(parsed: &[TraceElement], golden: &[GoldenElement]) -> u64 {
    let mut want: HashMap<(ElementKind, String), u64> = HashMap::new();
    for g in golden {
        *want.entry((g.kind, normalize_whitespace(&g.value))).or_default() += 1;
    }
    let mut hit = 0;
    for p in parsed {
        if let Some(n) = want.get_mut(&(p.kind, normalize_whitespace(&p.value))) {
            if *n > 0 {
                *n -= 1;
                hit += 1;
            }
        }
    }
    hit
}

/// Micro-averaged precision, recall and F1. `parsed` and `golden` must list
/// the same trace ids in the same order.
pub fn parser_accuracy(parsed: &[(String, Vec<TraceElement>)], golden: &[GoldenTrace]) -> Result<ParserAccuracy, EvalError> {
    if parsed.len() != golden.len() {
        return Err(EvalError::InvalidInput(format!("{} parsed traces but {} golden traces", parsed.len(), golden.len())));
    }
    let mut traces = Vec::with_capacity(golden.len());
    for ((id, elems), g) in parsed.iter().zip(golden) {
        if *id != g.id {
            return Err(EvalError::InvalidInput(format!("trace ids misaligned: parsed {id:?}, golden {:?}", g.id)));
        }
        traces.push(TraceTally {
            id: id.clone(),
            matched: matches(elems, &g.elements),
            parsed: elems.len() as u64,
            golden: g.elements.len() as u64,
        });
    }
    let matched = traces.iter().map(|t| t.matched).sum();
    let parsed_n = traces.iter().map(|t| t.parsed).sum();
    let golden_n = traces.iter().map(|t| t.golden).sum();
    let (precision, precision_degenerate) = ratio(matched, parsed_n);
    let (recall, recall_degenerate) = ratio(matched, golden_n);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(ParserAccuracy {
        precision,
        recall,
        f1,
        precision_degenerate,
        recall_degenerate,
        matched,
        parsed: parsed_n,
        golden: golden_n,
        traces,
    })
}
