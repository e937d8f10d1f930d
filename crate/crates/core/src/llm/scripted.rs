use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{fingerprint_messages, ChatBackend, ChatRequest, LlmError, Role};

/// One scripted exchange as stored on disk.
///
/// `match_key_source_text` is the request's [`ChatRequest::key_source`]
/// rendering: lines starting with `system: `, `user: ` or `assistant: ` open a
/// message, any other line continues the previous one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub match_key_source_text: String,
    pub response: String,
}

impl ScriptEntry {
    pub fn for_request(request: &ChatRequest, response: impl Into<String>) -> Self {
        Self { match_key_source_text: request.key_source(), response: response.into() }
    }

    pub fn fingerprint(&self) -> Result<String, LlmError> {
        let messages = parse_key_source(&self.match_key_source_text)?;
        Ok(fingerprint_messages(messages.iter().map(|(r, t)| (*r, t.as_str()))))
    }
}

/// Splits a key source back into `(role, text)` messages.
pub fn parse_key_source(source: &str) -> Result<Vec<(Role, String)>, LlmError> {
    let mut out: Vec<(Role, String)> = Vec::new();
    for line in source.lines() {
        let opened = line.split_once(": ").and_then(|(r, rest)| Role::parse(r).map(|r| (r, rest)));
        match (opened, out.last_mut()) {
            (Some((role, rest)), _) => out.push((role, rest.to_string())),
            (None, Some((_, text))) => {
                text.push(' ');
                text.push_str(line);
            }
            (None, None) if line.trim().is_empty() => {}
            (None, None) => {
                return Err(LlmError::Script(format!(
                    "key source must start with a role prefix, got {line:?}"
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(LlmError::Script("empty key source".into()));
    }
    Ok(out)
}

/// Replays canned responses keyed by prompt fingerprint. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    responses: HashMap<String, String>,
    model_id: String,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Result<Self, LlmError> {
        let mut responses = HashMap::new();
        for entry in entries {
            let key = entry.fingerprint()?;
            if let Some(previous) = responses.insert(key, entry.response.clone()) {
                if previous != entry.response {
                    return Err(LlmError::Script(format!(
                        "conflicting responses for the same prompt: {:?}",
                        crate::text::truncate_chars(&entry.match_key_source_text, 120)
                    )));
                }
            }
        }
        Ok(Self { responses, model_id: "scripted".into() })
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(&text)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let fingerprint = request.fingerprint();
        self.responses.get(&fingerprint).cloned().ok_or_else(|| LlmError::MissingScript {
            fingerprint,
            key_source: request.key_source(),
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Passes requests to another backend and remembers every successful
/// exchange, so a session can be saved as a script and replayed later.
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, recorded: Mutex::new(BTreeMap::new()) }
    }

    /// Recorded entries ordered by key source.
    pub fn entries(&self) -> Vec<ScriptEntry> {
        self.recorded
            .lock()
            .expect("recording poisoned")
            .iter()
            .map(|(k, v)| ScriptEntry { match_key_source_text: k.clone(), response: v.clone() })
            .collect()
    }

    /// Pretty JSON array of [`RecordingBackend::entries`], newline-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.entries()).expect("script entries serialize");
        s.push('\n');
        s
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        self.recorded.lock().expect("recording poisoned").insert(request.key_source(), response.clone());
        Ok(response)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}
