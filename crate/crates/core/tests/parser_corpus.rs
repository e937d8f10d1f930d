//! Element-level accuracy of the stack-trace parser on the hand-labeled
//! trace corpus in `fixtures/traces`.

use std::path::PathBuf;

use chime_core::eval::{parser_accuracy, GoldenTrace};
use chime_core::issue::parse_stack_trace;
use chime_core::TraceElement;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/traces")
}

pub fn load() -> (Vec<(String, Vec<TraceElement>)>, Vec<GoldenTrace>) {
    let dir = corpus_dir();
    let golden: Vec<GoldenTrace> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("golden.json")).unwrap()).unwrap();
    let parsed = golden
        .iter()
        .map(|g| {
            let text = std::fs::read_to_string(dir.join(format!("{}.txt", g.id))).unwrap();
            let elems = parse_stack_trace(&text).trace.map(|t| t.elements).unwrap_or_default();
            (g.id.clone(), elems)
        })
        .collect();
    (parsed, golden)
}

#[test]
fn corpus_meets_accuracy_floor() {
    let (parsed, golden) = load();
    assert!(golden.len() >= 30);
    let acc = parser_accuracy(&parsed, &golden).unwrap();
    for t in acc.traces.iter().filter(|t| t.matched != t.golden || t.matched != t.parsed) {
        eprintln!("{}: matched {} parsed {} golden {}", t.id, t.matched, t.parsed, t.golden);
    }
    eprintln!("precision {:.4} recall {:.4} f1 {:.4}", acc.precision, acc.recall, acc.f1);
    assert!(acc.precision >= 0.95, "precision {}", acc.precision);
    assert!(acc.recall >= 0.85, "recall {}", acc.recall);
    assert!((acc.f1 - 2.0 * acc.precision * acc.recall / (acc.precision + acc.recall)).abs() < 1e-9);
}
