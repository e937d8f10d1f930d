//! Persistent issue store with structured queries.
//!
//! Records live in a single JSON-lines file that is rewritten atomically on
//! every write, plus in-memory indices rebuilt from the records. Writes take
//! an exclusive lock and swap in a fully built state, so readers never see a
//! record without its index entries.

mod planner;
mod query;

pub use planner::{plan_query, PlanningError};
pub use query::{DateRange, Field, InvalidQuery, Predicate, ProjectedRow, StructuredQuery};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};

use crate::issue::{ElementKind, IssueKey, IssueRecord};
use crate::llm::{EmbeddingVector, Embedder};

/// Source of "now" for relative date predicates.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("store file {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    InvalidQuery(#[from] InvalidQuery),
}

/// Index key for trace element values: `"<kind>:<value>"`.
fn element_key(kind: ElementKind, value: &str) -> String {
    format!("{kind:?}:{value}")
}

/// Element values that get indexed: exception types, classes and files.
/// Qualified names are indexed under both the full and the simple name.
fn index_entries(record: &IssueRecord) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for trace in &record.stack_traces {
        for e in &trace.elements {
            match e.kind {
                ElementKind::ExceptionType | ElementKind::ClassElem => {
                    out.insert(element_key(e.kind, &e.value));
                    out.insert(element_key(e.kind, query::simple_name(&e.value)));
                }
                ElementKind::FileElem => {
                    out.insert(element_key(e.kind, &e.value));
                }
                _ => {}
            }
        }
    }
    out
}

/// Records paired with their embeddings, as used by retrieval.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub provider_id: String,
    pub records: Vec<IssueRecord>,
    /// `None` where the record has no embeddable text.
    pub embeddings: Vec<Option<EmbeddingVector>>,
}

/// Text embedded for a record: title followed by prose.
pub fn embedding_text(record: &IssueRecord) -> String {
    format!("{}\n{}", record.title, record.prose_text)
}

impl Corpus {
    pub fn build(records: Vec<IssueRecord>, embedder: &dyn Embedder) -> Self {
        let embeddings = records.iter().map(|r| embedder.embed(&embedding_text(r)).ok()).collect();
        Self { provider_id: embedder.provider_id().to_string(), records, embeddings }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
struct State {
    records: BTreeMap<IssueKey, IssueRecord>,
    element_index: BTreeMap<String, BTreeSet<IssueKey>>,
    corpus: Option<Arc<Corpus>>,
}

impl State {
    fn from_records(records: impl IntoIterator<Item = IssueRecord>) -> Self {
        let mut state = State::default();
        for r in records {
            state.upsert(r);
        }
        state
    }

    fn upsert(&mut self, record: IssueRecord) {
        let key = record.key();
        if let Some(old) = self.records.remove(&key) {
            for entry in index_entries(&old) {
                if let Some(keys) = self.element_index.get_mut(&entry) {
                    keys.remove(&key);
                    if keys.is_empty() {
                        self.element_index.remove(&entry);
                    }
                }
            }
        }
        for entry in index_entries(&record) {
            self.element_index.entry(entry).or_default().insert(key.clone());
        }
        self.records.insert(key, record);
        self.corpus = None;
    }
}

pub struct IssueStore {
    path: Option<PathBuf>,
    state: RwLock<State>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for IssueStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IssueStore").field("path", &self.path).field("len", &self.len()).finish()
    }
}

impl IssueStore {
    pub fn in_memory() -> Self {
        Self { path: None, state: RwLock::new(State::default()), clock: Arc::new(SystemClock) }
    }

    /// Opens the store file, creating an empty store if it does not exist.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let records = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
        Ok(Self { path: Some(path), state: RwLock::new(State::from_records(records)), clock: Arc::new(SystemClock) })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("store lock poisoned")
    }

    pub fn insert(&self, record: IssueRecord) -> Result<(), StoreError> {
        self.insert_many([record])
    }

    /// Upserts all records with one file write. On an I/O error nothing is
    /// applied.
    pub fn insert_many(&self, records: impl IntoIterator<Item = IssueRecord>) -> Result<(), StoreError> {
        let mut guard = self.state.write().expect("store lock poisoned");
        let mut next = guard.clone();
        for r in records {
            next.upsert(r);
        }
        if let Some(path) = &self.path {
            write_jsonl(path, next.records.values())?;
        }
        *guard = next;
        Ok(())
    }

    pub fn get(&self, key: &IssueKey) -> Option<IssueRecord> {
        self.read().records.get(key).cloned()
    }

    /// Records with the given number in any repository, ordered by key.
    pub fn by_number(&self, number: u64) -> Vec<IssueRecord> {
        self.read().records.values().filter(|r| r.number == number).cloned().collect()
    }

    /// All records ordered by key.
    pub fn records(&self) -> Vec<IssueRecord> {
        self.read().records.values().cloned().collect()
    }

    /// Keys of records whose traces contain an element with this value
    /// (full or simple name for exception types and classes).
    pub fn issues_with_element(&self, kind: ElementKind, value: &str) -> BTreeSet<IssueKey> {
        self.read().element_index.get(&element_key(kind, value)).cloned().unwrap_or_default()
    }

    /// Every indexed element key, for diagnostics and tests.
    pub fn element_keys(&self) -> Vec<String> {
        self.read().element_index.keys().cloned().collect()
    }

    /// Records plus embeddings from `embedder`, cached until the next write.
    pub fn corpus(&self, embedder: &dyn Embedder) -> Arc<Corpus> {
        if let Some(c) = &self.read().corpus {
            if c.provider_id == embedder.provider_id() {
                return c.clone();
            }
        }
        let mut guard = self.state.write().expect("store lock poisoned");
        if let Some(c) = &guard.corpus {
            if c.provider_id == embedder.provider_id() {
                return c.clone();
            }
        }
        let corpus = Arc::new(Corpus::build(guard.records.values().cloned().collect(), embedder));
        guard.corpus = Some(corpus.clone());
        corpus
    }

    /// Full records matching `query`, ordered by key, limit applied last.
    pub fn select(&self, query: &StructuredQuery) -> Result<Vec<IssueRecord>, StoreError> {
        query.validate()?;
        let now = self.now();
        let state = self.read();
        let candidates = self.candidates(&state, query);
        let mut out: Vec<IssueRecord> = match candidates {
            Some(keys) => keys.iter().filter_map(|k| state.records.get(k)).filter(|r| query.matches(r, now)).cloned().collect(),
            None => state.records.values().filter(|r| query.matches(r, now)).cloned().collect(),
        };
        if let Some(limit) = query.limit {
            out.truncate(limit.get());
        }
        Ok(out)
    }

    /// Projected rows matching `query`.
    pub fn execute(&self, query: &StructuredQuery) -> Result<Vec<ProjectedRow>, StoreError> {
        Ok(self.select(query)?.iter().map(|r| ProjectedRow::project(r, &query.projection)).collect())
    }

    /// Narrows the scan with the element index when the query has element
    /// predicates. Keys come back ordered.
    fn candidates(&self, state: &State, query: &StructuredQuery) -> Option<BTreeSet<IssueKey>> {
        let mut acc: Option<BTreeSet<IssueKey>> = None;
        for p in &query.filters {
            let (kind, value) = match p {
                Predicate::ExceptionType { value } => (ElementKind::ExceptionType, value),
                Predicate::Class { value } => (ElementKind::ClassElem, value),
                Predicate::File { value } => (ElementKind::FileElem, value),
                _ => continue,
            };
            let keys = state.element_index.get(&element_key(kind, value.trim())).cloned().unwrap_or_default();
            acc = Some(match acc {
                Some(a) => a.intersection(&keys).cloned().collect(),
                None => keys,
            });
        }
        acc
    }

    pub fn export_jsonl(&self, path: &Path) -> Result<(), StoreError> {
        write_jsonl(path, self.read().records.values())
    }

    /// Upserts every record of a JSON-lines file.
    pub fn import_jsonl(&self, path: &Path) -> Result<usize, StoreError> {
        let records = read_jsonl(path)?;
        let n = records.len();
        self.insert_many(records)?;
        Ok(n)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn read_jsonl(path: &Path) -> Result<Vec<IssueRecord>, StoreError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<'a>(path: &Path, records: impl Iterator<Item = &'a IssueRecord>) -> Result<(), StoreError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.into() })?;
            w.write_all(b"\n").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}
