//! Plain-text correctness table: one row per task, one column per query
//! type, plus the total and optional improvement column.

use std::fmt::Write;

use super::correctness::CorrectnessReport;
use crate::query::{QueryType, TaskType};

fn cell(report: &CorrectnessReport, task: TaskType, qtype: QueryType) -> String {
    report
        .cells
        .iter()
        .find(|c| c.task == task && c.qtype == qtype)
        .map(|c| format!("{}/{} ({}%)", c.correct, c.total, c.percent))
        .unwrap_or_else(|| "-".into())
}

pub fn render_table(report: &CorrectnessReport) -> String {
    let improv = report.improvement_points.is_some();
    let mut header = vec!["Task".to_string()];
    header.extend(QueryType::ALL.iter().map(|q| q.to_string()));
    header.push("Total".into());
    if improv {
        header.push("Improv (pts)".into());
    }

    let mut rows = vec![header];
    for task in TaskType::ALL {
        let Some(group) = report.by_task.iter().find(|g| g.label == task.as_str()) else { continue };
        let mut row = vec![task.to_string()];
        row.extend(QueryType::ALL.iter().map(|&q| cell(report, task, q)));
        row.push(format!("{}/{} ({}%)", group.correct, group.total, group.percent));
        if improv {
            row.push(group.improvement_points.map(|p| p.to_string()).unwrap_or_else(|| "-".into()));
        }
        rows.push(row);
    }
    let mut total = vec!["Total".to_string()];
    for q in QueryType::ALL {
        total.push(
            report
                .by_qtype
                .iter()
                .find(|g| g.label == q.as_str())
                .map(|g| format!("{}/{} ({}%)", g.correct, g.total, g.percent))
                .unwrap_or_else(|| "-".into()),
        );
    }
    total.push(format!("{}/{} ({}%)", report.correct, report.total, report.percent));
    if let Some(p) = report.improvement_points {
        total.push(p.to_string());
    }
    rows.push(total);

    let widths: Vec<usize> =
        (0..rows[0].len()).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (n, row) in rows.iter().enumerate() {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if n == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        }
    }
    out
}
