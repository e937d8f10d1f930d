//! Synthetic inputs shared by the benchmarks.

use chime_core::eval::{GradedResult, GradingMode};
use chime_core::issue::preprocess;
use chime_core::{IssueRecord, IssueState, QueryType, RawIssue, TaskType};
use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 24] = [
    "shard", "node", "cluster", "index", "query", "heap", "snapshot", "restore", "thread", "pool", "mapping", "search",
    "jvm", "startup", "crash", "timeout", "memory", "breaker", "plugin", "token", "ingest", "vector", "rank", "parser",
];

const TRACE: &str = "```\njava.lang.IllegalStateException: shard closed\n\tat org.elasticsearch.index.shard.IndexShard.verifyActive(IndexShard.java:1820)\n\tat org.elasticsearch.index.shard.IndexShard.refresh(IndexShard.java:1102)\n\tat java.base/java.lang.Thread.run(Thread.java:833)\n```";

fn sentence(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// `n` preprocessed issues with random prose, about a third carrying a
/// stack trace.
pub fn synthetic_records(n: usize, seed: u64) -> Vec<IssueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
    (0..n as u64)
        .map(|i| {
            let mut body = sentence(&mut rng, 40);
            if rng.gen_bool(0.33) {
                body.push_str("\n\n");
                body.push_str(TRACE);
            }
            let created = start + Duration::days(rng.gen_range(0..365));
            preprocess(&RawIssue {
                repo: "elastic/elasticsearch".into(),
                number: 100_000 + i,
                title: sentence(&mut rng, 6),
                body,
                labels: vec![[">bug", ":ml", "needs:triage"].choose(&mut rng).unwrap().to_string()],
                assignees: vec![],
                state: if rng.gen_bool(0.5) { IssueState::Open } else { IssueState::Closed },
                created_at: created,
                updated_at: created + Duration::days(rng.gen_range(0..90)),
                comments: vec![],
            })
        })
        .collect()
}

/// `n` graded results spread over every task and query type.
pub fn synthetic_results(n: usize, seed: u64) -> Vec<GradedResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| GradedResult {
            pair_id: format!("p{i}"),
            task: *TaskType::ALL.choose(&mut rng).unwrap(),
            qtype: *QueryType::ALL.choose(&mut rng).unwrap(),
            response: String::new(),
            correct: rng.gen_bool(0.6),
            score: None,
            grading_mode: GradingMode::Yn,
            error: None,
        })
        .collect()
}

/// A question drawn from the same vocabulary as [`synthetic_records`].
pub fn synthetic_question(seed: u64) -> String {
    sentence(&mut ChaCha8Rng::seed_from_u64(seed), 8)
}

pub fn sample_trace() -> &'static str {
    TRACE
}
