//! Correctness: the share of queries graded correct, overall and per
//! (task, query type) cell.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};

use super::{EvalError, GradedResult};
use crate::query::{QueryType, TaskType};

/// A percentage rounded to one decimal place, kept as tenths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(from = "f64")]
pub struct Percent {
    pub tenths: i64,
}

impl Percent {
    /// Rounds an exact percentage to tenths, halves away from zero.
    pub fn from_exact(p: Ratio<i128>) -> Self {
        let scaled = p * Ratio::from_integer(10);
        let (n, d) = (*scaled.numer(), *scaled.denom());
        let half_up = (2 * n.abs() + d) / (2 * d);
        Percent { tenths: (n.signum() * half_up) as i64 }
    }

    pub fn as_f64(self) -> f64 {
        self.tenths as f64 / 10.0
    }
}

impl From<f64> for Percent {
    fn from(v: f64) -> Self {
        Percent { tenths: (v * 10.0).round() as i64 }
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.tenths < 0 { "-" } else { "" };
        let a = self.tenths.abs();
        write!(f, "{sign}{}.{}", a / 10, a % 10)
    }
}

/// `correct / total * 100` as an exact ratio.
pub fn exact_percent(correct: u64, total: u64) -> Ratio<i128> {
    Ratio::new(i128::from(correct) * 100, i128::from(total.max(1)))
}

/// Rounded percentage in tenths, halves rounded up.
pub fn percent_tenths(correct: u64, total: u64) -> i64 {
    Percent::from_exact(exact_percent(correct, total)).tenths
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: TaskType,
    pub qtype: QueryType,
    pub correct: u64,
    pub total: u64,
    pub percent: Percent,
    /// Percentage-point change against the baseline's same cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement_points: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: String,
    pub correct: u64,
    pub total: u64,
    pub percent: Percent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement_points: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessReport {
    pub correct: u64,
    pub total: u64,
    pub percent: Percent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement_points: Option<Percent>,
    pub cells: Vec<CellReport>,
    pub by_task: Vec<GroupReport>,
    pub by_qtype: Vec<GroupReport>,
}

impl CorrectnessReport {
    /// Exact overall correctness as a fraction of queries.
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.correct, self.total)
    }

    pub fn exact_percent(&self) -> Ratio<i128> {
        exact_percent(self.correct, self.total)
    }
}

fn delta(current: (u64, u64), baseline: Option<(u64, u64)>) -> Option<Percent> {
    baseline.map(|(c, t)| Percent::from_exact(exact_percent(current.0, current.1) - exact_percent(c, t)))
}

fn count<K: Ord>(results: &[GradedResult], key: impl Fn(&GradedResult) -> K) -> BTreeMap<K, (u64, u64)> {
    let mut m: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for r in results {
        let e = m.entry(key(r)).or_default();
        e.0 += u64::from(r.correct);
        e.1 += 1;
    }
    m
}

/// Builds the report. With a baseline, each row gets the percentage-point
/// difference from the baseline's matching row, computed before rounding.
pub fn correctness(results: &[GradedResult], baseline: Option<&CorrectnessReport>) -> Result<CorrectnessReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::InvalidInput("correctness needs at least one graded result".into()));
    }
    let correct = results.iter().filter(|r| r.correct).count() as u64;
    let total = results.len() as u64;

    let cells = count(results, |r| (r.task, r.qtype))
        .into_iter()
        .map(|((task, qtype), (c, t))| CellReport {
            task,
            qtype,
            correct: c,
            total: t,
            percent: Percent { tenths: percent_tenths(c, t) },
            improvement_points: delta(
                (c, t),
                baseline.and_then(|b| b.cells.iter().find(|x| x.task == task && x.qtype == qtype)).map(|x| (x.correct, x.total)),
            ),
        })
        .collect();

    let group = |label: String, (c, t): (u64, u64), base: Option<&Vec<GroupReport>>| {
        let b = base.and_then(|v| v.iter().find(|g| g.label == label)).map(|g| (g.correct, g.total));
        GroupReport { percent: Percent { tenths: percent_tenths(c, t) }, improvement_points: delta((c, t), b), label, correct: c, total: t }
    };
    let by_task =
        count(results, |r| r.task).into_iter().map(|(k, v)| group(k.to_string(), v, baseline.map(|b| &b.by_task))).collect();
    let by_qtype =
        count(results, |r| r.qtype).into_iter().map(|(k, v)| group(k.to_string(), v, baseline.map(|b| &b.by_qtype))).collect();

    Ok(CorrectnessReport {
        correct,
        total,
        percent: Percent { tenths: percent_tenths(correct, total) },
        improvement_points: delta((correct, total), baseline.map(|b| (b.correct, b.total))),
        cells,
        by_task,
        by_qtype,
    })
}
