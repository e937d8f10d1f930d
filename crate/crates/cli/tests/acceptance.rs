//! Acceptance suite. Each test covers one criterion and writes a single
//! `PASS`/`FAIL` line to stderr, outside the test harness's capture, so the
//! lines show up in a plain `cargo test` run.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chime_core::eval::{
    correctness, parser_accuracy, sweep_scores, GoldenTrace, GradedResult, GradingMode, SWEEP_THRESHOLDS,
};
use chime_core::issue::{parse_stack_trace, preprocess};
use chime_core::llm::cosine;
use chime_core::retrieval::retrieve;
use chime_core::store::{embedding_text, Corpus, DateRange, FixedClock, Predicate, StructuredQuery};
use chime_core::transcript::{Section, StageStatus};
use chime_core::validator::{mt_adjudicate, MtDecision};
use chime_core::{
    Ablation, ElementKind, Embedder, HashedBowEmbedder, IssueKey, IssueRecord, IssueState, IssueStore,
    PipelineTranscript, QueryType, RawIssue, StackTrace, TaskType, TraceElement,
};
use chrono::{DateTime, Duration as Days, TimeZone, Utc};
use common::*;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn criterion(name: &str, limit: Option<Duration>, body: impl FnOnce() -> String) {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let mut err = std::io::stderr().lock();
    match result {
        Ok(detail) => match limit {
            Some(l) if elapsed >= l => {
                let _ = writeln!(err, "FAIL  {name}: took {elapsed:.2?}, limit {l:?}");
                panic!("{name}: took {elapsed:?}, limit {l:?}");
            }
            _ => {
                let _ = writeln!(err, "PASS  {name}: {detail} [{elapsed:.2?}]");
            }
        },
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            let _ = writeln!(err, "FAIL  {name}: {msg}");
            drop(err);
            resume_unwind(payload);
        }
    }
}

fn ask(script: &str, question: &str, extra: &[&str]) -> (std::process::Output, Duration) {
    let store = store_file().to_str().unwrap().to_string();
    let script = common::script(script);
    let mut args = vec!["--store", &store, "--script", script.to_str().unwrap(), "ask"];
    args.extend_from_slice(extra);
    args.push(question);
    let start = Instant::now();
    let out = run(&args);
    (out, start.elapsed())
}

fn ask_transcript(script: &str, question: &str, extra: &[&str]) -> PipelineTranscript {
    let mut args = vec!["--json"];
    args.extend_from_slice(extra);
    let (out, _) = ask(script, question, &args);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn similar_issues_replay() {
    store_file();
    let one_second = Duration::from_secs(1);
    criterion("similar-issues replay", None, || {
        let (full, t_full) = ask("similar", SIMILAR_Q, &[]);
        assert!(full.status.success(), "{}", stderr(&full));
        assert_eq!(stdout(&full).trim_end_matches('\n'), SIMILAR_FINAL);
        let (raw, t_raw) = ask("similar", SIMILAR_Q, &["--no-validate"]);
        assert!(raw.status.success(), "{}", stderr(&raw));
        assert_eq!(stdout(&raw).trim_end_matches('\n'), SIMILAR_INITIAL);
        assert!(t_full < one_second && t_raw < one_second, "full {t_full:?}, no-validate {t_raw:?}");
        format!("full -> {SIMILAR_FINAL:?} in {t_full:.2?}; --no-validate -> {SIMILAR_INITIAL:?} in {t_raw:.2?}")
    });
}

#[test]
fn g1gc_startup_replay() {
    store_file();
    criterion("G1GC startup replay", None, || {
        let (out, elapsed) = ask("g1gc", G1GC_Q, &["--json"]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
        let t: PipelineTranscript = serde_json::from_slice(&out.stdout).unwrap();
        let v = t.validation.as_ref().expect("validation ran");
        assert_eq!(v.cove_status, StageStatus::Ran);
        assert_eq!(v.mt_status, StageStatus::Ran);
        let followups: Vec<&str> = v.cove_followups.iter().map(|p| p.question.as_str()).collect();
        let mutations: Vec<&str> = v.mt_mutations.iter().map(|p| p.question.as_str()).collect();
        assert_eq!(followups, G1GC_FOLLOWUPS);
        assert_eq!(mutations, G1GC_MUTATIONS);
        assert_eq!(v.initial_response, G1GC_INITIAL);
        assert!(t.final_response.starts_with("Yes") && t.final_response.contains("UseG1GC"));
        assert!(t.final_response.contains("required"));
        assert_eq!(t.final_response, G1GC_FINAL);
        format!("3 follow-ups and 3 mutations in order; final {:?} in {elapsed:.2?}", t.final_response)
    });
}

fn trace_corpus() -> (Vec<(String, Vec<TraceElement>)>, Vec<GoldenTrace>) {
    let dir = fixtures().join("traces");
    let golden: Vec<GoldenTrace> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("golden.json")).unwrap()).unwrap();
    let parsed = golden
        .iter()
        .map(|g| {
            let text = std::fs::read_to_string(dir.join(format!("{}.txt", g.id))).unwrap();
            (g.id.clone(), parse_stack_trace(&text).trace.map(|t| t.elements).unwrap_or_default())
        })
        .collect();
    (parsed, golden)
}

#[test]
fn parser_golden_corpus() {
    criterion("parser golden corpus", Some(Duration::from_secs(5)), || {
        let (parsed, golden) = trace_corpus();
        assert!(golden.len() >= 30, "only {} traces", golden.len());
        let acc = parser_accuracy(&parsed, &golden).unwrap();
        assert!(acc.precision >= 0.95, "precision {}", acc.precision);
        assert!(acc.recall >= 0.85, "recall {}", acc.recall);
        let f1 = 2.0 * acc.precision * acc.recall / (acc.precision + acc.recall);
        assert!((acc.f1 - f1).abs() < 1e-9);
        // Independent recount of the element totals.
        let golden_total: usize = golden.iter().map(|g| g.elements.len()).sum();
        let parsed_total: usize = parsed.iter().map(|(_, e)| e.len()).sum();
        assert_eq!(acc.golden as usize, golden_total);
        assert_eq!(acc.parsed as usize, parsed_total);
        format!(
            "{} traces, P {:.4} R {:.4} F1 {:.4} ({} matched / {} parsed / {} golden)",
            golden.len(),
            acc.precision,
            acc.recall,
            acc.f1,
            acc.matched,
            acc.parsed,
            acc.golden
        )
    });
}

fn graded(i: usize, correct: bool, task: TaskType, qtype: QueryType) -> GradedResult {
    GradedResult {
        pair_id: format!("p{i}"),
        task,
        qtype,
        response: String::new(),
        correct,
        score: None,
        grading_mode: GradingMode::Yn,
        error: None,
    }
}

/// Tenths of a percent, halves away from zero, from an exact fraction n/d.
fn tenths_oracle(n: i128, d: i128) -> i64 {
    let scaled = 1000 * n;
    let q = (2 * scaled.abs() + d) / (2 * d);
    (scaled.signum() * q) as i64
}

fn random_results(rng: &mut ChaCha8Rng, n: usize) -> Vec<GradedResult> {
    let p: f64 = rng.gen();
    (0..n)
        .map(|i| {
            let task = *TaskType::ALL.choose(rng).unwrap();
            let qtype = *QueryType::ALL.choose(rng).unwrap();
            graded(i, rng.gen_bool(p), task, qtype)
        })
        .collect()
}

fn recount<K: Ord>(rs: &[GradedResult], key: impl Fn(&GradedResult) -> K) -> BTreeMap<K, (i128, i128)> {
    let mut m = BTreeMap::new();
    for r in rs {
        let e: &mut (i128, i128) = m.entry(key(r)).or_default();
        if r.correct {
            e.0 += 1;
        }
        e.1 += 1;
    }
    m
}

#[test]
fn correctness_exactness() {
    criterion("correctness exactness", Some(Duration::from_secs(1)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut trials = 0;
        let mut sizes = vec![1, 2, 10_000];
        sizes.extend((0..40).map(|_| rng.gen_range(1..=10_000)));
        for n in sizes {
            let rs = random_results(&mut rng, n);
            let base_n = rng.gen_range(1..=10_000);
            let base = random_results(&mut rng, base_n);
            let base_report = correctness(&base, None).unwrap();
            let report = correctness(&rs, Some(&base_report)).unwrap();

            let c = rs.iter().filter(|r| r.correct).count() as i128;
            let t = rs.len() as i128;
            let bc = base.iter().filter(|r| r.correct).count() as i128;
            let bt = base.len() as i128;
            assert_eq!(report.exact_percent(), Ratio::new(100 * c, t));
            assert_eq!((report.correct as i128, report.total as i128), (c, t));
            assert_eq!(report.percent.tenths, tenths_oracle(c, t));
            let delta = tenths_oracle(c * bt - bc * t, t * bt);
            assert_eq!(report.improvement_points.unwrap().tenths, delta);

            let cells = recount(&rs, |r| (r.task, r.qtype));
            assert_eq!(report.cells.len(), cells.len());
            for cell in &report.cells {
                let (cc, ct) = cells[&(cell.task, cell.qtype)];
                assert_eq!((cell.correct as i128, cell.total as i128), (cc, ct));
                assert_eq!(cell.percent.tenths, tenths_oracle(cc, ct));
            }
            let tasks = recount(&rs, |r| r.task.to_string());
            for g in &report.by_task {
                let (gc, gt) = tasks[&g.label];
                assert_eq!((g.correct as i128, g.total as i128), (gc, gt));
                assert_eq!(g.percent.tenths, tenths_oracle(gc, gt));
            }
            let qtypes = recount(&rs, |r| r.qtype.to_string());
            for g in &report.by_qtype {
                let (gc, gt) = qtypes[&g.label];
                assert_eq!(g.percent.tenths, tenths_oracle(gc, gt));
            }
            trials += 1;
        }
        let fixed: Vec<_> = (0..412).map(|i| graded(i, i < 150, TaskType::T1S, QueryType::YN)).collect();
        let shown = correctness(&fixed, None).unwrap().percent.to_string();
        assert_eq!(shown, "36.4");
        format!("{trials} random multisets (up to 10000) match the recount; 150/412 shows {shown}%")
    });
}

#[test]
fn threshold_sweep_monotone() {
    criterion("threshold sweep", Some(Duration::from_secs(1)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let n = rng.gen_range(1..200);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let curve = sweep_scores(&scores, &SWEEP_THRESHOLDS).unwrap();
            assert_eq!(curve.len(), SWEEP_THRESHOLDS.len());
            for w in curve.windows(2) {
                assert!(w[1].correct <= w[0].correct && w[1].percent <= w[0].percent, "{w:?}");
            }
            for p in &curve {
                assert_eq!(p.correct as usize, scores.iter().filter(|s| **s >= p.threshold).count());
            }
        }
        let step = sweep_scores(&[0.65, 0.75], &[0.6, 0.7, 0.8]).unwrap();
        let shown: Vec<String> = step.iter().map(|p| p.percent.to_string()).collect();
        assert_eq!(shown, ["100.0", "50.0", "0.0"]);
        format!("500 random score sets non-increasing; step case {}", shown.join("/"))
    });
}

#[test]
fn yn_majority_oracle() {
    criterion("YN majority oracle", Some(Duration::from_secs(1)), || {
        let embedder = HashedBowEmbedder::default();
        let text = |yes: bool| if yes { "Yes, the option is required." } else { "No, the option is not required." };
        let mut cases = 0;
        for bits in 0..8u8 {
            let triple = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
            let answers: Vec<String> = triple.iter().map(|b| text(*b).to_string()).collect();
            let majority = triple.iter().filter(|b| **b).count() >= 2;
            for base in [true, false] {
                let (decision, adj) = mt_adjudicate(text(base), &answers, QueryType::YN, &embedder, 0.7, &mut vec![]);
                let expected = if majority == base {
                    MtDecision::Keep
                } else {
                    MtDecision::Adopt { index: triple.iter().position(|b| *b == majority).unwrap(), rephrase: true }
                };
                assert_eq!(decision, expected, "triple {triple:?} base {base}");
                let agree = triple.iter().filter(|b| **b == base).count();
                assert_eq!((adj.polarity_votes.affirm, adj.polarity_votes.deny), (agree, 3 - agree));
                cases += 1;
            }
        }
        format!("all 8 triples x 2 intermediate polarities ({cases} cases) match 2-of-3 majority")
    });
}

const VOCAB: [&str; 40] = [
    "shard", "node", "cluster", "index", "query", "heap", "snapshot", "restore", "thread", "pool", "mapping", "field",
    "search", "aggregation", "bucket", "jvm", "startup", "crash", "timeout", "memory", "circuit", "breaker", "plugin",
    "security", "token", "ingest", "pipeline", "script", "painless", "vector", "rescorer", "learning", "rank",
    "parser", "exception", "array", "bounds", "lowercase", "latin", "garbage",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn ts(days: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap() + Days::days(days)
}

fn random_raw(rng: &mut ChaCha8Rng, number: u64) -> RawIssue {
    RawIssue {
        repo: ["elastic/elasticsearch", "eclipse-openj9/openj9"].choose(rng).unwrap().to_string(),
        number,
        title: words(rng, 2, 8),
        body: words(rng, 0, 30),
        labels: vec![],
        assignees: vec![],
        state: IssueState::Open,
        created_at: ts(0),
        updated_at: ts(0),
        comments: vec![],
    }
}

#[test]
fn retrieval_oracle() {
    criterion("retrieval oracle", Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let embedder = HashedBowEmbedder::default();
        let mut compared = 0;
        for trial in 0..100 {
            let n = if trial == 0 { 1000 } else { rng.gen_range(1..=1000) };
            let mut numbers: Vec<u64> = (1..=5000).collect();
            numbers.shuffle(&mut rng);
            let records: Vec<IssueRecord> = numbers[..n].iter().map(|&k| preprocess(&random_raw(&mut rng, k))).collect();
            let corpus = Corpus::build(records.clone(), &embedder);
            let question = words(&mut rng, 1, 6);
            let k = rng.gen_range(1..=12);
            let got = retrieve(&question, &corpus, &embedder, k, 2000).unwrap();

            let q = embedder.embed(&question).unwrap();
            let mut ranked: Vec<(f64, IssueKey)> = records
                .iter()
                .filter_map(|r| {
                    let e = embedder.embed(&embedding_text(r)).ok()?;
                    let s = cosine(&q, &e).ok()?;
                    let dot: f64 = q.values.iter().zip(&e.values).map(|(a, b)| a * b).sum();
                    assert!((s - dot / (q.norm() * e.norm())).abs() < 1e-12);
                    Some((s, r.key()))
                })
                .collect();
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));
            ranked.truncate(k);

            let got_keys: Vec<&IssueKey> = got.hits.iter().map(|h| &h.key).collect();
            let want_keys: Vec<&IssueKey> = ranked.iter().map(|(_, k)| k).collect();
            assert_eq!(got_keys, want_keys, "trial {trial}, question {question:?}");
            for (h, (s, _)) in got.hits.iter().zip(&ranked) {
                assert_eq!(h.score, *s);
                assert!(!h.forced);
            }
            compared += 1;
        }
        format!("{compared} randomized corpora (up to 1000 records) rank like brute-force cosine")
    });
}

const EXCEPTIONS: [&str; 4] = [
    "java.lang.ArrayIndexOutOfBoundsException",
    "java.lang.IllegalStateException",
    "org.elasticsearch.common.xcontent.XContentParseException",
    "java.io.IOException",
];
const CLASSES: [&str; 4] =
    ["java.lang.CharacterDataLatin1", "org.elasticsearch.tools.launchers.JvmErgonomics", "org.elasticsearch.node.Node", "java.util.ArrayList"];
const FILES: [&str; 4] = ["CharacterDataLatin1.java", "JvmErgonomics.java", "Node.java", "ArrayList.java"];
const LABELS: [&str; 5] = [">bug", ":ml", "Team:ML", "needs:triage", ">test-failure"];
const PEOPLE: [&str; 3] = ["alice", "bob", "carol"];
const REPOS: [&str; 2] = ["elastic/elasticsearch", "eclipse-openj9/openj9"];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str], max: usize) -> Vec<&'a str> {
    let n = rng.gen_range(0..=max);
    let mut v: Vec<&str> = pool.choose_multiple(rng, n).copied().collect();
    v.sort();
    v
}

fn element(kind: ElementKind, value: &str, frame: Option<u32>) -> TraceElement {
    TraceElement { kind, value: value.to_string(), frame_index: frame, chain_depth: 0 }
}

fn random_record(rng: &mut ChaCha8Rng, number: u64) -> IssueRecord {
    let traces = (0..rng.gen_range(0..=2))
        .map(|_| {
            let mut elements = vec![element(ElementKind::ExceptionType, EXCEPTIONS.choose(rng).unwrap(), None)];
            for f in 0..rng.gen_range(1..=3u32) {
                let i = rng.gen_range(0..CLASSES.len());
                elements.push(element(ElementKind::ClassElem, CLASSES[i], Some(f)));
                elements.push(element(ElementKind::MethodElem, "run", Some(f)));
                elements.push(element(ElementKind::FileElem, FILES[i], Some(f)));
                elements.push(element(ElementKind::LineElem, "42", Some(f)));
            }
            StackTrace { elements, raw_text: String::new() }
        })
        .collect();
    let created = rng.gen_range(0..400);
    let labels: Vec<String> = pick(rng, &LABELS, 3).into_iter().map(|l| {
        if rng.gen_bool(0.2) { l.to_uppercase() } else { l.to_string() }
    }).collect();
    IssueRecord {
        repo: REPOS.choose(rng).unwrap().to_string(),
        number,
        title: format!("issue {number}"),
        state: if rng.gen_bool(0.5) { IssueState::Open } else { IssueState::Closed },
        labels,
        assignees: pick(rng, &PEOPLE, 2).into_iter().map(String::from).collect(),
        created_at: ts(created),
        updated_at: ts(created + rng.gen_range(0..200)),
        body: String::new(),
        comments: vec![],
        prose_text: String::new(),
        code_blocks: vec![],
        stack_traces: traces,
        diagnostics: Default::default(),
    }
}

fn random_range(rng: &mut ChaCha8Rng) -> DateRange {
    let mut r = DateRange::default();
    while r == DateRange::default() {
        match rng.gen_range(0..4) {
            0 => r.after = Some(ts(rng.gen_range(0..600))),
            1 => r.before = Some(ts(rng.gen_range(0..600))),
            2 => r.older_than_days = Some(rng.gen_range(0..300)),
            _ => r.within_days = Some(rng.gen_range(0..300)),
        }
    }
    r
}

fn random_predicate(rng: &mut ChaCha8Rng) -> Predicate {
    let simple = |s: &str| s.rsplit('.').next().unwrap().to_string();
    match rng.gen_range(0..10) {
        0 => Predicate::Label { value: LABELS.choose(rng).unwrap().to_string() },
        1 => Predicate::Assignee { value: PEOPLE.choose(rng).unwrap().to_uppercase() },
        2 => Predicate::State { value: if rng.gen_bool(0.5) { IssueState::Open } else { IssueState::Closed } },
        3 => Predicate::created(random_range(rng)),
        4 => Predicate::updated(random_range(rng)),
        5 => {
            let e = EXCEPTIONS.choose(rng).unwrap();
            Predicate::ExceptionType { value: if rng.gen_bool(0.5) { e.to_string() } else { simple(e) } }
        }
        6 => {
            let c = CLASSES.choose(rng).unwrap();
            Predicate::Class { value: if rng.gen_bool(0.5) { c.to_string() } else { simple(c) } }
        }
        7 => Predicate::File { value: FILES.choose(rng).unwrap().to_string() },
        8 => Predicate::Repo { value: REPOS.choose(rng).unwrap().to_string() },
        _ => Predicate::Number { values: (0..rng.gen_range(1..5)).map(|_| rng.gen_range(1..1200)).collect() },
    }
}

/// Full-scan evaluation written out independently of the store.
fn oracle_matches(p: &Predicate, r: &IssueRecord, now: DateTime<Utc>) -> bool {
    let values = |kind: ElementKind| -> Vec<&str> {
        r.stack_traces.iter().flat_map(|t| &t.elements).filter(|e| e.kind == kind).map(|e| e.value.as_str()).collect()
    };
    let named = |value: &str, wanted: &str| value == wanted || value.ends_with(&format!(".{wanted}"));
    let in_range = |t: DateTime<Utc>, after: &Option<DateTime<Utc>>, before: &Option<DateTime<Utc>>, older: &Option<u32>, within: &Option<u32>| {
        after.is_none_or(|a| t >= a)
            && before.is_none_or(|b| t < b)
            && older.is_none_or(|d| t < now - Days::days(d as i64))
            && within.is_none_or(|d| t >= now - Days::days(d as i64))
    };
    match p {
        Predicate::Label { value } => r.labels.iter().any(|l| l.to_lowercase() == value.to_lowercase()),
        Predicate::Assignee { value } => r.assignees.iter().any(|a| a.to_lowercase() == value.to_lowercase()),
        Predicate::State { value } => r.state == *value,
        Predicate::CreatedAt { after, before, older_than_days, within_days } => {
            in_range(r.created_at, after, before, older_than_days, within_days)
        }
        Predicate::UpdatedAt { after, before, older_than_days, within_days } => {
            in_range(r.updated_at, after, before, older_than_days, within_days)
        }
        Predicate::ExceptionType { value } => values(ElementKind::ExceptionType).iter().any(|v| named(v, value)),
        Predicate::Class { value } => values(ElementKind::ClassElem).iter().any(|v| named(v, value)),
        Predicate::File { value } => values(ElementKind::FileElem).contains(&value.as_str()),
        Predicate::Repo { value } => r.repo.to_lowercase() == value.to_lowercase(),
        Predicate::Number { values } => values.contains(&r.number),
    }
}

#[test]
fn store_oracle() {
    criterion("store oracle", Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let now = ts(450);
        let mut queries = 0;
        let mut nonempty = 0;
        for trial in 0..100 {
            let n = if trial == 0 { 1000 } else { rng.gen_range(1..=1000) };
            let mut numbers: Vec<u64> = (1..1200).collect();
            numbers.shuffle(&mut rng);
            let records: Vec<IssueRecord> = numbers[..n].iter().map(|&k| random_record(&mut rng, k)).collect();
            let store = IssueStore::in_memory().with_clock(Arc::new(FixedClock(now)));
            store.insert_many(records.clone()).unwrap();
            let mut sorted = records.clone();
            sorted.sort_by_key(IssueRecord::key);
            for _ in 0..10 {
                let filters: Vec<Predicate> = (0..rng.gen_range(0..=3)).map(|_| random_predicate(&mut rng)).collect();
                let mut q = StructuredQuery { select_all: filters.is_empty(), filters, ..Default::default() };
                if rng.gen_bool(0.3) {
                    q = q.limit(rng.gen_range(1..20));
                }
                if rng.gen_bool(0.5) {
                    q = q.project([chime_core::store::Field::Number, chime_core::store::Field::Labels]);
                }
                let rows = store.execute(&q).unwrap();
                let mut want: Vec<&IssueRecord> =
                    sorted.iter().filter(|r| q.filters.iter().all(|p| oracle_matches(p, r, now))).collect();
                if let Some(l) = q.limit {
                    want.truncate(l.get());
                }
                let got: Vec<&IssueKey> = rows.iter().map(|r| &r.key).collect();
                let want_keys: Vec<IssueKey> = want.iter().map(|r| r.key()).collect();
                assert_eq!(got, want_keys.iter().collect::<Vec<_>>(), "query {q:?}");
                for (row, rec) in rows.iter().zip(&want) {
                    let names: BTreeSet<&str> = row.fields.keys().map(String::as_str).collect();
                    if q.projection.is_empty() {
                        assert_eq!(names.len(), 14);
                    } else {
                        assert_eq!(names, BTreeSet::from(["labels", "number"]));
                    }
                    assert_eq!(row.fields["number"], serde_json::json!(rec.number));
                }
                queries += 1;
                nonempty += usize::from(!rows.is_empty());
            }
        }
        format!("{queries} random queries over 100 corpora (up to 1000 records) equal a full scan; {nonempty} non-empty")
    });
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn evaluate(out: &Path, extra: &[&str]) -> std::process::Output {
    let store = store_file().to_str().unwrap().to_string();
    let script = common::script("benchmark");
    let bench = benchmark_path();
    let mut args = vec!["--store", &store, "--script", script.to_str().unwrap(), "evaluate", bench.to_str().unwrap()];
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn evaluate_determinism() {
    store_file();
    criterion("determinism", None, || {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        for d in [&a, &b] {
            let o = evaluate(d, &[]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
        for (name, bytes) in &ta {
            assert!(bytes == &tb[name], "{name} differs between runs");
        }
        let transcripts = ta.keys().filter(|k| k.starts_with("transcripts")).count();
        assert_eq!(transcripts, 6);

        // Hand count over the fixture: q1 q2 q3 q4 q6 correct, q5 not.
        let report: serde_json::Value = serde_json::from_slice(&ta["report.json"]).unwrap();
        assert_eq!((report["correct"].as_u64(), report["total"].as_u64()), (Some(5), Some(6)));
        assert_eq!(report["percent"].as_f64(), Some(83.3));
        format!("{} files byte-identical across two runs; 5/6 correct (83.3%)", ta.len())
    });
}

fn section_map(t: &PipelineTranscript) -> HashMap<Section, serde_json::Value> {
    Section::PIPELINE.iter().map(|s| (*s, t.section_json(*s))).collect()
}

#[test]
fn ablation_wiring() {
    store_file();
    criterion("ablation wiring", None, || {
        let mut checked = Vec::new();
        for (script, question) in [("similar", SIMILAR_Q), ("g1gc", G1GC_Q)] {
            let full = section_map(&ask_transcript(script, question, &[]));
            for ablation in Ablation::ALL {
                let t = ask_transcript(script, question, &["--ablate", ablation.as_str()]);
                assert_eq!(t.ablation.as_deref(), Some(ablation.as_str()));
                let ablated = section_map(&t);
                let first = ablation.first_section();
                for s in Section::PIPELINE.iter().filter(|s| **s < first) {
                    assert_eq!(full[s], ablated[s], "{ablation} changed upstream section {s:?}");
                }
                assert_ne!(full[&first], ablated[&first], "{ablation} left {first:?} unchanged");
                checked.push(format!("{ablation}->{first:?}"));
            }
            let raw = section_map(&ask_transcript(script, question, &["--no-validate"]));
            for s in Section::PIPELINE.iter().filter(|s| **s < Section::Cove) {
                assert_eq!(full[s], raw[s], "--no-validate changed {s:?}");
            }
        }
        checked.dedup();
        format!("each ablation changes only its own stage onward ({})", checked[..4].join(", "))
    });
}
