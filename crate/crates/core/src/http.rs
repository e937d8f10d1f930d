//! Minimal blocking HTTP transport used by the live model backend and the
//! issue ingestion client.
//!
//! Everything above this layer talks to [`HttpTransport`], so tests run
//! against [`ReplayTransport`] fixtures and never touch the network.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self { method: Method::Get, url: url.into(), headers: Vec::new(), body: None }
    }

    pub fn post_json(url: impl Into<String>, body: &serde_json::Value) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: Some(body.to_string()),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("no recorded fixture for {method:?} {url}")]
    NoFixture { method: Method, url: String },
    #[error("fixture I/O: {0}")]
    Fixture(String),
}

pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Real network transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl HttpTransport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let method = match request.method {
            Method::Get => "GET",
            Method::Post => "POST",
        };
        let mut req = self.agent.request(method, &request.url);
        for (k, v) in &request.headers {
            req = req.set(k, v);
        }
        let result = match &request.body {
            Some(body) => req.send_string(body),
            None => req.call(),
        };
        let resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(_, resp)) => resp,
            Err(ureq::Error::Transport(t)) => return Err(TransportError::Connection(t.to_string())),
        };
        let status = resp.status();
        let headers = resp
            .headers_names()
            .into_iter()
            .filter_map(|name| resp.header(&name).map(|v| (name.clone(), v.to_string())))
            .collect();
        let body = resp
            .into_string()
            .map_err(|e| TransportError::Connection(e.to_string()))?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// One recorded exchange in a fixture file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub method: Method,
    pub url: String,
    #[serde(flatten)]
    pub response: HttpResponse,
}

/// Serves responses from recorded fixtures keyed by method and URL.
///
/// Several exchanges recorded for the same key are served in order; the last
/// one repeats once the queue is drained.
#[derive(Default)]
pub struct ReplayTransport {
    fixtures: Mutex<HashMap<(Method, String), VecDeque<HttpResponse>>>,
    requests: Mutex<Vec<HttpRequest>>,
}

impl ReplayTransport {
    pub fn new(exchanges: impl IntoIterator<Item = RecordedExchange>) -> Self {
        let mut fixtures: HashMap<(Method, String), VecDeque<HttpResponse>> = HashMap::new();
        for e in exchanges {
            fixtures.entry((e.method, e.url)).or_default().push_back(e.response);
        }
        Self { fixtures: Mutex::new(fixtures), requests: Mutex::new(Vec::new()) }
    }

    /// Loads every `*.json` file in `dir`; each holds an array of recorded exchanges.
    pub fn from_dir(dir: &Path) -> Result<Self, TransportError> {
        let mut all = Vec::new();
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| TransportError::Fixture(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = fs::read_to_string(&path)
                .map_err(|e| TransportError::Fixture(format!("{}: {e}", path.display())))?;
            let batch: Vec<RecordedExchange> = serde_json::from_str(&text)
                .map_err(|e| TransportError::Fixture(format!("{}: {e}", path.display())))?;
            all.extend(batch);
        }
        Ok(Self::new(all))
    }

    /// Requests seen so far, in order.
    pub fn requests(&self) -> Vec<HttpRequest> {
        self.requests.lock().expect("replay log poisoned").clone()
    }
}

impl HttpTransport for ReplayTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.requests.lock().expect("replay log poisoned").push(request.clone());
        let mut fixtures = self.fixtures.lock().expect("replay fixtures poisoned");
        let queue = fixtures
            .get_mut(&(request.method, request.url.clone()))
            .filter(|q| !q.is_empty())
            .ok_or_else(|| TransportError::NoFixture {
                method: request.method,
                url: request.url.clone(),
            })?;
        if queue.len() > 1 {
            Ok(queue.pop_front().expect("non-empty queue"))
        } else {
            Ok(queue[0].clone())
        }
    }
}
