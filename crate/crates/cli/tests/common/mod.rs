//! Shared fixtures for the command-line and service tests: the issue store,
//! the scripted replay files and a rule-based responder that generates
//! them.
//!
//! The replay files under `fixtures/scripts` are produced by running the
//! pipeline against [`Responder`] through a [`RecordingBackend`]. Run
//! `CHIME_REGEN_FIXTURES=1 cargo test -p chime-cli --test scripts` after
//! changing a prompt template or the responder tables.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, OnceLock};

use chime_core::eval::load_benchmark;
use chime_core::ingest::load_local;
use chime_core::issue::preprocess;
use chime_core::llm::{LlmError, RecordingBackend};
use chime_core::prompts;
use chime_core::text::referenced_issue_numbers;
use chime_core::{
    Ablation, AskOptions, ChatBackend, ChatRequest, HashedBowEmbedder, IssueStore, Pipeline, PipelineConfig,
    ScriptedBackend,
};

pub const SIMILAR_Q: &str = "Is issue 18102 and 18669 similar?";
pub const SIMILAR_INITIAL: &str = "No, issue 18102 and 18669 are not similar.";
pub const SIMILAR_FINAL: &str = "Yes, issue 18102 and 18669 are similar.";

pub const G1GC_Q: &str = "Does Elasticsearch require the UseG1GC option to be present during issue 18151 startup stage?";
pub const G1GC_INITIAL: &str =
    "No, Elasticsearch does not require the UseG1GC option to be present during its startup stage in issue 18151.";
pub const G1GC_FINAL: &str = "Yes, it is required to have the UseG1GC option during Elasticsearch's startup stage .";

pub const G1GC_FOLLOWUPS: [&str; 3] = [
    "Is Elasticsearch the software mentioned in the response?",
    "Is the UseG1GC option not required?",
    "Is issue 18151 not requiring the UseG1GC option?",
];
pub const G1GC_MUTATIONS: [&str; 3] = [
    "Is the UseG1GC option necessary for Elasticsearch to be present during its startup stage in issue 18151?",
    "Must the UseG1GC option be included during Elasticsearch's startup stage for issue 18151?",
    "Is it required to have the UseG1GC option present during Elasticsearch's startup stage for issue 18151?",
];

pub const PAIR3_Q: &str = "What existing label is recommended for issues that need immediate triaging?";
pub const PAIR3_REWRITE: &str = "Find the existing label applied to issues that need immediate triaging, based on issue labels.";

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn script(name: &str) -> PathBuf {
    fixtures().join("scripts").join(format!("{name}.json"))
}

pub fn benchmark_path() -> PathBuf {
    fixtures().join("benchmark/pairs.jsonl")
}

pub fn corpus_path() -> PathBuf {
    fixtures().join("corpus/issues.jsonl")
}

/// In-memory store holding the preprocessed fixture corpus.
pub fn corpus_store() -> IssueStore {
    let load = load_local(&corpus_path()).unwrap();
    assert!(load.errors.is_empty());
    let store = IssueStore::in_memory();
    store.insert_many(load.issues.iter().map(preprocess)).unwrap();
    store
}

pub fn pipeline(backend: Arc<dyn ChatBackend>) -> Pipeline {
    Pipeline::new(Arc::new(corpus_store()), backend, Arc::new(HashedBowEmbedder::default()), PipelineConfig::default())
}

pub fn scripted(names: &[&str]) -> Arc<ScriptedBackend> {
    let mut entries = Vec::new();
    for n in names {
        let text = std::fs::read_to_string(script(n)).unwrap();
        entries.extend(serde_json::from_str::<Vec<chime_core::llm::ScriptEntry>>(&text).unwrap());
    }
    Arc::new(ScriptedBackend::new(entries).unwrap())
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chime"));
    c.env_clear();
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A store file holding the ingested corpus, shared by every test of one
/// test binary.
pub fn store_file() -> &'static Path {
    static STORE: OnceLock<PathBuf> = OnceLock::new();
    STORE.get_or_init(|| {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("store-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("issues.jsonl");
        let _ = std::fs::remove_file(&path);
        let out = run(&["--store", path.to_str().unwrap(), "ingest", "--local", corpus_path().to_str().unwrap()]);
        assert!(out.status.success(), "ingest failed: {}", stderr(&out));
        path
    })
}

// ---------------------------------------------------------------------------
// Responder

/// Canned model behavior for the fixture questions. Lookups go by the
/// prompt template and the question or answer it carries.
pub struct Responder {
    rewrites: BTreeMap<&'static str, &'static str>,
    answers: BTreeMap<&'static str, &'static str>,
    followups: BTreeMap<&'static str, &'static str>,
    syntheses: BTreeMap<&'static str, &'static str>,
    mutations: BTreeMap<&'static str, &'static str>,
    rephrasings: BTreeMap<&'static str, &'static str>,
}

const PAIR4_ANSWER: &str =
    "The team responsible for issue 104160 is the ML team, with no specific assignee and labels indicating it is related to ML.";
const PAIR3_ANSWER: &str = "The existing label recommended for issues that need immediate triaging is 'needs:triage'.";
const PAIR5_ANSWER: &str =
    "Issue 103072 reports a flaky snapshot restore on Windows while issue 103344 asks for a documentation update.";
const PAIR6_ANSWER: &str = "Line 72 in the CharacterDataLatin1 class.";

impl Default for Responder {
    fn default() -> Self {
        let rewrites = BTreeMap::from([
            (SIMILAR_Q, "Compare the exceptions, stack traces, and descriptions of issues 18102 and 18669 to determine similarity."),
            (G1GC_Q, "Check whether Elasticsearch requires the UseG1GC option during the startup stage reported in issue 18151, using its exceptions, stack traces, and description."),
            (PAIR3_Q, PAIR3_REWRITE),
            ("Which team is responsible for issue 104160?", "Summarize the team responsible for issue 104160 based on the assignee and labels."),
            ("Summarize similarities between issues 103072 & 103344", "Summarize the similarities between issues 103072 and 103344 from their titles, exceptions, bodies, and labels."),
            ("Which code in CharacterDataLatin1 triggered the ArrayIndexOutOfBoundsException in issue 17063?", "Identify the file, class, and line number at the top of the stack trace of the ArrayIndexOutOfBoundsException reported in issue 17063."),
        ]);

        let mut answers = BTreeMap::new();
        for (original, rewritten) in &rewrites {
            let initial = match *original {
                SIMILAR_Q => SIMILAR_INITIAL,
                G1GC_Q => G1GC_INITIAL,
                PAIR3_Q => PAIR3_ANSWER,
                q if q.contains("104160") => PAIR4_ANSWER,
                q if q.contains("103072") => PAIR5_ANSWER,
                _ => PAIR6_ANSWER,
            };
            answers.insert(*original, initial);
            answers.insert(*rewritten, initial);
        }
        answers.extend([
            ("Can issue 18102 and 18669 be considered similar based on their descriptions and reported problems?", "Yes, based on the descriptions and reported problems, they can be considered similar as both involve ArrayIndexOutOfBoundsException."),
            ("Have there been any interactions or dependencies between the teams working on issue 18102 and 18669 that could indicate similarity?", "Yes, there have been interactions between the teams working on issue 18102 and 18669."),
            ("Are the issues 18102 and 18669 related to the same error?", "No, issues 18102 and 18669 are not related to same error."),
            ("Are issues 18102 and 18669 alike?", "Yes, issues 18102 and 18669 are alike; both report an ArrayIndexOutOfBoundsException."),
            ("Should issue 18102 and issue 18669 be considered similar?", "Yes, issue 18102 and issue 18669 should be considered similar."),
            ("Do issues 18102 and 18669 resemble each other?", "No, issues 18102 and 18669 do not resemble each other."),
            (G1GC_FOLLOWUPS[0], "Yes, Elasticsearch is mentioned in the response."),
            (G1GC_FOLLOWUPS[1], "No, the UseG1GC option is not required."),
            (G1GC_FOLLOWUPS[2], "No, issue 18151 is not requiring the UseG1GC option."),
            (G1GC_MUTATIONS[0], "No, the UseG1GC option is not necessary for Elasticsearch's to be present during its startup stage in issue 18151."),
            (G1GC_MUTATIONS[1], "Yes, the UseG1GC option must be included during Elasticsearch's startup stage for issue 18151."),
            (G1GC_MUTATIONS[2], "Yes, it is required to have the UseG1GC option present during Elasticsearch's startup stage for issue 18151."),
            ("Which label marks issues that need immediate triaging?", PAIR3_ANSWER),
            ("Which existing label is suggested for issues needing immediate triage?", PAIR3_ANSWER),
            ("What label should be applied to issues that must be triaged immediately?", PAIR3_ANSWER),
            ("Which label do issues that need urgent triage get?", PAIR3_ANSWER),
            ("Which team do the labels of issue 104160 point to?", PAIR4_ANSWER),
            ("Which team owns issue 104160?", PAIR4_ANSWER),
            ("What team must handle issue 104160?", PAIR4_ANSWER),
            ("Which group of developers is behind issue 104160?", PAIR4_ANSWER),
            ("What do issues 103072 and 103344 have in common?", PAIR5_ANSWER),
            ("Which similarities do issues 103072 and 103344 share?", PAIR5_ANSWER),
            ("How should the similarities between issues 103072 and 103344 be summarized?", PAIR5_ANSWER),
            ("What makes issues 103072 and 103344 alike?", PAIR5_ANSWER),
            ("Which frame is at the top of the stack trace in issue 17063?", PAIR6_ANSWER),
            ("Which line in CharacterDataLatin1 throws the ArrayIndexOutOfBoundsException in issue 17063?", PAIR6_ANSWER),
            ("What code must have triggered the ArrayIndexOutOfBoundsException in CharacterDataLatin1 for issue 17063?", PAIR6_ANSWER),
            ("Where in CharacterDataLatin1 does the ArrayIndexOutOfBoundsException of issue 17063 occur?", PAIR6_ANSWER),
        ]);

        let followups = BTreeMap::from([
            (SIMILAR_Q, "1. Can issue 18102 and 18669 be considered similar based on their descriptions and reported problems?\n2. Have there been any interactions or dependencies between the teams working on issue 18102 and 18669 that could indicate similarity?\n3. Are the issues 18102 and 18669 related to the same error?"),
            (G1GC_Q, "1. Is Elasticsearch the software mentioned in the response?\n2. Is the UseG1GC option not required?\n3. Is issue 18151 not requiring the UseG1GC option?"),
            (PAIR3_Q, "Which label marks issues that need immediate triaging?"),
            ("Which team is responsible for issue 104160?", "Which team do the labels of issue 104160 point to?"),
            ("Summarize similarities between issues 103072 & 103344", "What do issues 103072 and 103344 have in common?"),
            ("Which code in CharacterDataLatin1 triggered the ArrayIndexOutOfBoundsException in issue 17063?", "Which frame is at the top of the stack trace in issue 17063?"),
        ]);

        let syntheses = BTreeMap::from([(SIMILAR_Q, SIMILAR_FINAL)]);

        let mutations = BTreeMap::from([
            (SIMILAR_Q, "Are issues 18102 and 18669 alike?\nShould issue 18102 and issue 18669 be considered similar?\nDo issues 18102 and 18669 resemble each other?"),
            (G1GC_Q, "1. Is the UseG1GC option necessary for Elasticsearch to be present during its startup stage in issue 18151?\n2. Must the UseG1GC option be included during Elasticsearch's startup stage for issue 18151?\n3. Is it required to have the UseG1GC option present during Elasticsearch's startup stage for issue 18151?"),
            (PAIR3_Q, "Which existing label is suggested for issues needing immediate triage?\nWhat label should be applied to issues that must be triaged immediately?\nWhich label do issues that need urgent triage get?"),
            ("Which team is responsible for issue 104160?", "Which team owns issue 104160?\nWhat team must handle issue 104160?\nWhich group of developers is behind issue 104160?"),
            ("Summarize similarities between issues 103072 & 103344", "Which similarities do issues 103072 and 103344 share?\nHow should the similarities between issues 103072 and 103344 be summarized?\nWhat makes issues 103072 and 103344 alike?"),
            ("Which code in CharacterDataLatin1 triggered the ArrayIndexOutOfBoundsException in issue 17063?", "Which line in CharacterDataLatin1 throws the ArrayIndexOutOfBoundsException in issue 17063?\nWhat code must have triggered the ArrayIndexOutOfBoundsException in CharacterDataLatin1 for issue 17063?\nWhere in CharacterDataLatin1 does the ArrayIndexOutOfBoundsException of issue 17063 occur?"),
        ]);

        let rephrasings = BTreeMap::from([
            ("Yes, the UseG1GC option must be included during Elasticsearch's startup stage for issue 18151.", G1GC_FINAL),
            ("Yes, issues 18102 and 18669 are alike; both report an ArrayIndexOutOfBoundsException.", SIMILAR_FINAL),
        ]);

        Self { rewrites, answers, followups, syntheses, mutations, rephrasings }
    }
}

fn field<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(name)).map(str::trim)
}

const PLAN_PROJECTION: &str = r#"["repo","number","title","state","labels","assignees","exception_types"]"#;

impl Responder {
    fn reply(&self, request: &ChatRequest) -> Option<String> {
        let template = prompts::identify(request.messages())?;
        let last = request.last_text();
        let id = template.id.split('/').next().unwrap_or_default();
        let owned = |s: &&str| s.to_string();
        match id {
            "classify-type" => Some("YN".into()),
            "transform-yn" | "transform-fact" | "transform-summary" => {
                Some(self.rewrites.get(last).map(owned).unwrap_or_else(|| last.to_string()))
            }
            "plan-query" => {
                let numbers = referenced_issue_numbers(last);
                if numbers.is_empty() {
                    Some("SELECT number FROM issues WHERE label = 'needs:triage'".into())
                } else {
                    let list: Vec<String> = numbers.iter().map(u64::to_string).collect();
                    Some(format!(
                        r#"{{"filters":[{{"field":"number","values":[{}]}}],"projection":{PLAN_PROJECTION}}}"#,
                        list.join(",")
                    ))
                }
            }
            "plan-query-retry" => {
                Some(r#"{"filters":[{"field":"label","value":"needs:triage"}],"projection":["repo","number","title","labels"]}"#.into())
            }
            "rag-answer" => self.answers.get(last).map(owned),
            "cove-followups" => field(last, "Question:").and_then(|q| self.followups.get(q)).map(owned),
            "cove-synthesis" => field(last, "Question:").and_then(|q| self.syntheses.get(q)).map(owned),
            "mt-mutate" => self.mutations.get(last).map(owned),
            "mt-rephrase" => field(last, "Answer:").map(|a| self.rephrasings.get(a).map(owned).unwrap_or_else(|| a.to_string())),
            "grade-yn" => last.split_whitespace().next().map(|w| w.trim_matches(|c: char| !c.is_alphabetic()).to_string()),
            _ => None,
        }
    }
}

impl ChatBackend for Responder {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.reply(request).ok_or_else(|| {
            LlmError::Script(format!("responder has no reply for {}", chime_core::text::truncate_chars(&request.key_source(), 200)))
        })
    }

    fn model_id(&self) -> &str {
        "scripted"
    }
}

// ---------------------------------------------------------------------------
// Script generation

/// Every option set a replay test asks a single question with.
pub fn ask_variants() -> Vec<AskOptions> {
    let mut v = vec![AskOptions::full(), AskOptions::default()];
    v.extend(Ablation::ALL.map(|a| AskOptions { ablation: Some(a), ..AskOptions::full() }));
    v
}

fn record(run: impl FnOnce(&Pipeline)) -> String {
    let recorder = Arc::new(RecordingBackend::new(Responder::default()));
    let p = pipeline(recorder.clone());
    run(&p);
    recorder.to_json()
}

fn ask_all(p: &Pipeline, question: &str) {
    for opts in ask_variants() {
        let out = p.ask(question, &opts).unwrap();
        let failed: Vec<_> = out.transcript.exchanges.iter().filter_map(|e| e.error.clone()).collect();
        assert!(failed.is_empty(), "{question} {:?}: {failed:?}", opts.ablation);
    }
}

/// Script file name to contents.
pub fn generate_scripts() -> BTreeMap<&'static str, String> {
    let pairs = load_benchmark(&benchmark_path()).unwrap();
    BTreeMap::from([
        ("similar", record(|p| ask_all(p, SIMILAR_Q))),
        ("g1gc", record(|p| ask_all(p, G1GC_Q))),
        (
            "benchmark",
            record(|p| {
                for opts in [AskOptions::full(), AskOptions::default()] {
                    let run = p.run_benchmark(&pairs, &opts);
                    let failed: Vec<_> = run.results.iter().filter_map(|r| r.error.clone()).collect();
                    assert!(failed.is_empty(), "{failed:?}");
                }
            }),
        ),
    ])
}
