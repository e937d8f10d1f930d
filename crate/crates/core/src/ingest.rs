//! Issue ingestion from a GitHub-style REST API or from local JSON files.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::http::{HttpRequest, HttpResponse, HttpTransport, TransportError};
use crate::issue::{IssueState, RawIssue};

pub const DEFAULT_API: &str = "https://api.github.com";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    Numbers { numbers: Vec<u64> },
    UpdatedWithin { days: u32 },
    AllOpen,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSpec {
    pub owner: String,
    pub name: String,
    pub selection: Selection,
    pub token: Option<String>,
    pub page_size: u32,
}

impl IngestSpec {
    /// `repo` must be `owner/name`; the page size defaults to 100.
    pub fn new(repo: &str, selection: Selection) -> Result<Self, IngestError> {
        let (owner, name) = repo
            .split_once('/')
            .filter(|(o, n)| !o.is_empty() && !n.is_empty() && !n.contains('/'))
            .ok_or_else(|| IngestError::InvalidSpec(format!("repository must look like owner/name, got {repo:?}")))?;
        Ok(Self { owner: owner.into(), name: name.into(), selection, token: None, page_size: 100 })
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_page_size(mut self, page_size: u32) -> Result<Self, IngestError> {
        if !(1..=100).contains(&page_size) {
            return Err(IngestError::InvalidSpec(format!("page size must be within 1..=100, got {page_size}")));
        }
        self.page_size = page_size;
        Ok(self)
    }

    pub fn repo(&self) -> String {
        format!("{}/{}", self.owner, self.name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("invalid ingest request: {0}")]
    InvalidSpec(String),
    #[error("authentication failed (HTTP {status}); check the token")]
    Auth { status: u16 },
    #[error("repository or issue not found: {0}")]
    NotFound(String),
    #[error("rate limit still exhausted after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("unexpected HTTP {status} from {url}")]
    Http { status: u16, url: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("decoding response from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("cache {path}: {message}")]
    Cache { path: String, message: String },
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// REST client over an [`HttpTransport`], with an optional on-disk cache
/// laid out as `<cache>/<owner>/<name>/<number>.json`.
pub struct GitHubClient<'a> {
    transport: &'a dyn HttpTransport,
    base_url: String,
    cache_dir: Option<PathBuf>,
    sleeper: Sleeper,
    max_attempts: u32,
    max_wait: Duration,
}

impl<'a> GitHubClient<'a> {
    pub fn new(transport: &'a dyn HttpTransport) -> Self {
        Self {
            transport,
            base_url: DEFAULT_API.into(),
            cache_dir: None,
            sleeper: Box::new(std::thread::sleep),
            max_attempts: 4,
            max_wait: Duration::from_secs(3600),
        }
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_string();
        self
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Replaces the function used to wait out rate limits.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn with_max_attempts(mut self, attempts: u32) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    /// Fetches the selected issues with all their comments. Pull requests
    /// are skipped. Issues whose cached copy has the same `updated_at` are
    /// served from the cache without fetching comments again.
    pub fn fetch(&self, spec: &IngestSpec, now: DateTime<Utc>) -> Result<Vec<RawIssue>, IngestError> {
        let repo_url = format!("{}/repos/{}/{}", self.base_url, spec.owner, spec.name);
        let listed: Vec<Value> = match &spec.selection {
            Selection::Numbers { numbers } => {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                for n in numbers.iter().filter(|n| seen.insert(**n)) {
                    out.push(self.get_json(&format!("{repo_url}/issues/{n}"), spec)?);
                }
                out
            }
            Selection::UpdatedWithin { days: 0 } => Vec::new(),
            Selection::UpdatedWithin { days } => {
                let since = now - chrono::Duration::days(i64::from(*days));
                let since = since.to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
                let url = format!("{repo_url}/issues?state=all&since={since}&per_page={}", spec.page_size);
                self.get_pages(&url, spec)?
            }
            Selection::AllOpen => {
                let url = format!("{repo_url}/issues?state=open&per_page={}", spec.page_size);
                self.get_pages(&url, spec)?
            }
        };

        let repo = spec.repo();
        let mut out = Vec::new();
        for item in listed {
            if item.get("pull_request").is_some_and(|v| !v.is_null()) {
                continue;
            }
            let url = format!("{repo_url}/issues");
            let mut issue = github_issue(&item, Some(&repo))
                .map_err(|message| IngestError::Decode { url: url.clone(), message })?;
            if let Some(cached) = self.cached(spec, issue.number, issue.updated_at)? {
                out.push(cached);
                continue;
            }
            let comments_url = format!("{repo_url}/issues/{}/comments?per_page={}", issue.number, spec.page_size);
            issue.comments = self
                .get_pages(&comments_url, spec)?
                .iter()
                .map(|c| c.get("body").and_then(Value::as_str).unwrap_or_default().to_string())
                .collect();
            self.store_cache(spec, &issue)?;
            out.push(issue);
        }
        Ok(out)
    }

    fn cache_path(&self, spec: &IngestSpec, number: u64) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(&spec.owner).join(&spec.name).join(format!("{number}.json")))
    }

    fn cached(&self, spec: &IngestSpec, number: u64, updated_at: DateTime<Utc>) -> Result<Option<RawIssue>, IngestError> {
        let Some(path) = self.cache_path(spec, number) else { return Ok(None) };
        let Ok(text) = fs::read_to_string(&path) else { return Ok(None) };
        match serde_json::from_str::<RawIssue>(&text) {
            Ok(issue) if issue.updated_at == updated_at => Ok(Some(issue)),
            Ok(_) => Ok(None),
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "ignoring unreadable cache entry");
                Ok(None)
            }
        }
    }

    fn store_cache(&self, spec: &IngestSpec, issue: &RawIssue) -> Result<(), IngestError> {
        let Some(path) = self.cache_path(spec, issue.number) else { return Ok(()) };
        let err = |message: String| IngestError::Cache { path: path.display().to_string(), message };
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(|e| err(e.to_string()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| err(e.to_string()))?;
        serde_json::to_writer_pretty(&mut tmp, issue).map_err(|e| err(e.to_string()))?;
        tmp.persist(&path).map_err(|e| err(e.to_string()))?;
        Ok(())
    }

    fn send(&self, url: &str, spec: &IngestSpec) -> Result<HttpResponse, IngestError> {
        let mut request = HttpRequest::get(url)
            .header("Accept", "application/vnd.github+json")
            .header("User-Agent", "chime-ingest");
        if let Some(token) = &spec.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        for attempt in 1..=self.max_attempts {
            let resp = self.transport.send(&request)?;
            if resp.is_success() {
                return Ok(resp);
            }
            if let Some(wait) = rate_limit_wait(&resp) {
                if attempt == self.max_attempts {
                    return Err(IngestError::RateLimited { attempts: attempt });
                }
                let wait = wait.min(self.max_wait);
                tracing::info!(secs = wait.as_secs(), attempt, "rate limited, waiting");
                (self.sleeper)(wait);
                continue;
            }
            return Err(match resp.status {
                401 | 403 => IngestError::Auth { status: resp.status },
                404 => IngestError::NotFound(url.to_string()),
                status => IngestError::Http { status, url: url.to_string() },
            });
        }
        Err(IngestError::RateLimited { attempts: self.max_attempts })
    }

    fn get_json(&self, url: &str, spec: &IngestSpec) -> Result<Value, IngestError> {
        let resp = self.send(url, spec)?;
        serde_json::from_str(&resp.body).map_err(|e| IngestError::Decode { url: url.into(), message: e.to_string() })
    }

    /// Follows `Link: rel="next"`; without a Link header, requests the next
    /// page number until a short page arrives.
    fn get_pages(&self, first: &str, spec: &IngestSpec) -> Result<Vec<Value>, IngestError> {
        let mut out = Vec::new();
        let mut url = first.to_string();
        let mut page = 1u32;
        loop {
            let resp = self.send(&url, spec)?;
            let items: Vec<Value> = serde_json::from_str(&resp.body)
                .map_err(|e| IngestError::Decode { url: url.clone(), message: e.to_string() })?;
            let n = items.len();
            out.extend(items);
            match resp.header("Link") {
                Some(link) => match next_link(link) {
                    Some(next) => url = next,
                    None => break,
                },
                None if n as u32 >= spec.page_size && n > 0 => {
                    page += 1;
                    url = format!("{first}&page={page}");
                }
                None => break,
            }
        }
        Ok(out)
    }
}

fn next_link(header: &str) -> Option<String> {
    header.split(',').find_map(|part| {
        let (url, params) = part.split_once(';')?;
        params
            .split(';')
            .any(|p| p.trim().replace(' ', "") == "rel=\"next\"")
            .then(|| url.trim().trim_start_matches('<').trim_end_matches('>').to_string())
    })
}

fn rate_limit_wait(resp: &HttpResponse) -> Option<Duration> {
    if resp.status != 403 && resp.status != 429 {
        return None;
    }
    if let Some(secs) = resp.header("Retry-After").and_then(|v| v.trim().parse::<u64>().ok()) {
        return Some(Duration::from_secs(secs));
    }
    if resp.header("X-RateLimit-Remaining").map(str::trim) == Some("0") {
        let reset = resp.header("X-RateLimit-Reset").and_then(|v| v.trim().parse::<i64>().ok());
        let wait = reset.map(|r| (r - Utc::now().timestamp()).max(1) as u64).unwrap_or(60);
        return Some(Duration::from_secs(wait));
    }
    (resp.status == 429).then(|| Duration::from_secs(60))
}

fn repo_from_urls(item: &Value) -> Option<String> {
    if let Some(u) = item.get("repository_url").and_then(Value::as_str) {
        let mut parts = u.trim_end_matches('/').rsplit('/');
        let name = parts.next()?;
        let owner = parts.next()?;
        return Some(format!("{owner}/{name}"));
    }
    let u = item.get("html_url").and_then(Value::as_str)?;
    let path = u.split_once("://").map(|(_, rest)| rest).unwrap_or(u);
    let mut parts = path.split('/').skip(1);
    Some(format!("{}/{}", parts.next()?, parts.next()?))
}

fn names(v: Option<&Value>, field: &str) -> Vec<String> {
    v.and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|x| x.as_str().or_else(|| x.get(field).and_then(Value::as_str)).map(str::to_string))
                .collect()
        })
        .unwrap_or_default()
}

fn timestamp(item: &Value, field: &str) -> Result<DateTime<Utc>, String> {
    let s = item.get(field).and_then(Value::as_str).ok_or_else(|| format!("missing {field}"))?;
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc)).map_err(|e| format!("{field}: {e}"))
}

/// Maps a GitHub issue object to a [`RawIssue`]. `repo` overrides the
/// repository derived from the object's URLs.
fn github_issue(item: &Value, repo: Option<&str>) -> Result<RawIssue, String> {
    let repo = repo.map(str::to_string).or_else(|| repo_from_urls(item)).ok_or("cannot determine repository")?;
    let number = item.get("number").and_then(Value::as_u64).ok_or("missing issue number")?;
    let title = item.get("title").and_then(Value::as_str).ok_or("missing title")?.to_string();
    let state: IssueState = item.get("state").and_then(Value::as_str).ok_or("missing state")?.parse()?;
    let comments = match item.get("comments") {
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|c| c.as_str().or_else(|| c.get("body").and_then(Value::as_str)).map(str::to_string))
            .collect(),
        _ => Vec::new(),
    };
    Ok(RawIssue {
        repo,
        number,
        title,
        body: item.get("body").and_then(Value::as_str).unwrap_or_default().to_string(),
        labels: names(item.get("labels"), "name"),
        assignees: names(item.get("assignees"), "login"),
        state,
        created_at: timestamp(item, "created_at")?,
        updated_at: timestamp(item, "updated_at")?,
        comments,
    })
}

/// Parses one record in either the canonical shape or the GitHub API shape.
pub fn parse_record(item: &Value) -> Result<RawIssue, String> {
    if !item.is_object() {
        return Err("record is not a JSON object".into());
    }
    if item.get("repository_url").is_some() || item.get("html_url").is_some() {
        if item.get("pull_request").is_some_and(|v| !v.is_null()) {
            return Err("record is a pull request".into());
        }
        return github_issue(item, item.get("repo").and_then(Value::as_str));
    }
    let issue: RawIssue = serde_json::from_value(item.clone()).map_err(|e| e.to_string())?;
    if issue.title.trim().is_empty() {
        return Err("empty title".into());
    }
    if issue.repo.split('/').count() != 2 {
        return Err(format!("repository must look like owner/name, got {:?}", issue.repo));
    }
    Ok(issue)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub source: String,
    /// 1-based line for JSON-lines input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    /// 0-based position within a JSON array.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(index) = self.index {
            write!(f, "[{index}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Default)]
pub struct LocalLoad {
    pub issues: Vec<RawIssue>,
    pub errors: Vec<RecordError>,
}

impl LocalLoad {
    fn accept(&mut self, seen: &mut HashSet<(String, u64)>, source: &str, line: Option<usize>, index: Option<usize>, item: Result<Value, String>) {
        let result = item.and_then(|v| parse_record(&v));
        let err = |message: String| RecordError { source: source.to_string(), line, index, message };
        match result {
            Ok(issue) => {
                if seen.insert((issue.repo.clone(), issue.number)) {
                    self.issues.push(issue);
                } else {
                    self.errors.push(err(format!("duplicate issue {}#{}", issue.repo, issue.number)));
                }
            }
            Err(message) => self.errors.push(err(message)),
        }
    }
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                collect_files(&p, out)?;
            } else if p.extension().is_some_and(|x| x == "json" || x == "jsonl") {
                out.push(p);
            }
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

/// Loads issues from a file or a directory tree of `.json`/`.jsonl` files.
///
/// A `.json` file holds one record or an array of records; anything else is
/// read as JSON lines. Malformed or duplicate records are reported in
/// [`LocalLoad::errors`] and skipped; the rest of the batch still loads.
pub fn load_local(path: &Path) -> Result<LocalLoad, IngestError> {
    let io = |e: std::io::Error| IngestError::Cache { path: path.display().to_string(), message: e.to_string() };
    if !path.exists() {
        return Err(IngestError::NotFound(path.display().to_string()));
    }
    let mut files = Vec::new();
    collect_files(path, &mut files).map_err(io)?;
    let mut load = LocalLoad::default();
    let mut seen = HashSet::new();
    for file in files {
        let source = file.display().to_string();
        let text = match fs::read_to_string(&file) {
            Ok(t) => t,
            Err(e) => {
                load.errors.push(RecordError { source, line: None, index: None, message: e.to_string() });
                continue;
            }
        };
        let is_json = file.extension().is_some_and(|x| x == "json");
        if is_json {
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Array(items)) => {
                    for (i, item) in items.into_iter().enumerate() {
                        load.accept(&mut seen, &source, None, Some(i), Ok(item));
                    }
                }
                Ok(item) => load.accept(&mut seen, &source, None, None, Ok(item)),
                Err(e) => load.accept(&mut seen, &source, Some(e.line()), None, Err(e.to_string())),
            }
        } else {
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let item = serde_json::from_str::<Value>(line).map_err(|e| e.to_string());
                load.accept(&mut seen, &source, Some(i + 1), None, item);
            }
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{Method, RecordedExchange, ReplayTransport};
    use std::sync::{Arc, Mutex};

    fn canonical(n: u64) -> String {
        format!(
            r#"{{"repo":"o/r","number":{n},"title":"t{n}","state":"open","created_at":"2024-01-01T00:00:00Z","updated_at":"2024-01-02T00:00:00Z"}}"#
        )
    }

    #[test]
    fn jsonl_with_one_bad_record_continues() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        fs::write(&p, format!("{}\n{{not json\n{}\n", canonical(1), canonical(3))).unwrap();
        let load = load_local(&p).unwrap();
        assert_eq!(load.issues.len(), 2);
        assert_eq!(load.errors.len(), 1);
        assert_eq!(load.errors[0].line, Some(2));
    }

    #[test]
    fn directory_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        for n in 1..=5 {
            fs::write(dir.path().join(format!("{n}.json")), canonical(n)).unwrap();
        }
        fs::write(dir.path().join("dup.json"), format!("[{}]", canonical(2))).unwrap();
        let load = load_local(dir.path()).unwrap();
        assert_eq!(load.issues.len(), 5);
        assert_eq!(load.errors.len(), 1);
        assert!(load.errors[0].message.contains("duplicate"));
        assert_eq!(load.errors[0].index, Some(0));
    }

    #[test]
    fn github_shape_maps_fields() {
        let v: Value = serde_json::json!({
            "html_url": "https://github.com/elastic/elasticsearch/issues/7",
            "number": 7, "title": "x", "state": "closed", "body": null,
            "labels": [{"name": ">bug"}], "assignees": [{"login": "a"}],
            "created_at": "2024-01-01T00:00:00Z", "updated_at": "2024-01-02T00:00:00Z", "comments": 3
        });
        let issue = parse_record(&v).unwrap();
        assert_eq!(issue.repo, "elastic/elasticsearch");
        assert_eq!(issue.labels, [">bug"]);
        assert_eq!(issue.assignees, ["a"]);
        assert_eq!(issue.body, "");
        assert!(issue.comments.is_empty());
    }

    #[test]
    fn spec_validation() {
        assert!(IngestSpec::new("nope", Selection::AllOpen).is_err());
        let s = IngestSpec::new("o/r", Selection::AllOpen).unwrap();
        assert!(s.clone().with_page_size(0).is_err());
        assert!(s.with_page_size(101).is_err());
    }

    #[test]
    fn link_header_parsing() {
        let h = r#"<https://x/issues?page=2>; rel="next", <https://x/issues?page=5>; rel="last""#;
        assert_eq!(next_link(h).as_deref(), Some("https://x/issues?page=2"));
        assert_eq!(next_link(r#"<https://x/issues?page=1>; rel="prev""#), None);
    }

    fn ex(url: &str, status: u16, headers: &[(&str, &str)], body: &str) -> RecordedExchange {
        RecordedExchange {
            method: Method::Get,
            url: url.into(),
            response: HttpResponse {
                status,
                headers: headers.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                body: body.into(),
            },
        }
    }

    #[test]
    fn rate_limit_waits_then_succeeds() {
        let issue = r#"{"number":5,"title":"t","state":"open","body":"b","labels":[],"assignees":[],"created_at":"2024-01-01T00:00:00Z","updated_at":"2024-01-02T00:00:00Z"}"#;
        let t = ReplayTransport::new([
            ex("http://api/repos/o/r/issues/5", 429, &[("Retry-After", "7")], ""),
            ex("http://api/repos/o/r/issues/5", 200, &[], issue),
            ex("http://api/repos/o/r/issues/5/comments?per_page=100", 200, &[], r#"[{"body":"c1"}]"#),
        ]);
        let waits = Arc::new(Mutex::new(Vec::new()));
        let w = waits.clone();
        let client = GitHubClient::new(&t).with_base_url("http://api").with_sleeper(move |d| w.lock().unwrap().push(d));
        let spec = IngestSpec::new("o/r", Selection::Numbers { numbers: vec![5] }).unwrap();
        let got = client.fetch(&spec, Utc::now()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].comments, ["c1"]);
        assert_eq!(*waits.lock().unwrap(), [Duration::from_secs(7)]);
    }

    #[test]
    fn distinct_errors() {
        let t = ReplayTransport::new([
            ex("http://api/repos/o/r/issues/1", 401, &[], "{}"),
            ex("http://api/repos/o/missing/issues/1", 404, &[], "{}"),
            ex("http://api/repos/o/busy/issues/1", 403, &[("X-RateLimit-Remaining", "0"), ("X-RateLimit-Reset", "0")], ""),
        ]);
        let client = GitHubClient::new(&t).with_base_url("http://api").with_sleeper(|_| {});
        let sel = Selection::Numbers { numbers: vec![1] };
        let run = |repo: &str| client.fetch(&IngestSpec::new(repo, sel.clone()).unwrap(), Utc::now());
        assert!(matches!(run("o/r"), Err(IngestError::Auth { status: 401 })));
        assert!(matches!(run("o/missing"), Err(IngestError::NotFound(_))));
        assert!(matches!(run("o/busy"), Err(IngestError::RateLimited { attempts: 4 })));
    }

    #[test]
    fn empty_window_makes_no_requests() {
        let t = ReplayTransport::new([]);
        let client = GitHubClient::new(&t);
        let spec = IngestSpec::new("o/r", Selection::UpdatedWithin { days: 0 }).unwrap();
        assert!(client.fetch(&spec, Utc::now()).unwrap().is_empty());
        assert!(t.requests().is_empty());
    }
}
