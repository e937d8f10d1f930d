//! Chat-completion and embedding backends.
//!
//! Two chat backends exist: [`LiveBackend`] speaks the OpenAI-compatible HTTP
//! shape, and [`ScriptedBackend`] replays canned responses keyed by a prompt
//! fingerprint so whole pipeline runs can be reproduced offline.

mod embed;
mod live;
mod scripted;

pub use embed::{cosine, EmbeddingVector, HashedBowEmbedder, FALLBACK_DIMENSION};
pub use live::{LiveBackend, LiveConfig, LiveEmbedder, RetryPolicy};
pub use scripted::{parse_key_source, RecordingBackend, ScriptEntry, ScriptedBackend};

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::normalize_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "system" => Some(Role::System),
            "user" => Some(Role::User),
            "assistant" => Some(Role::Assistant),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, text: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into() }
    }
}

/// A validated chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    messages: Vec<ChatMessage>,
    temperature: f64,
    model_id: String,
}

impl ChatRequest {
    /// Builds a request at temperature 0.0.
    pub fn new(messages: Vec<ChatMessage>, model_id: impl Into<String>) -> Result<Self, LlmError> {
        let Some(first) = messages.first() else {
            return Err(LlmError::InvalidInput("chat request has no messages".into()));
        };
        if first.role == Role::Assistant {
            return Err(LlmError::InvalidInput(
                "first message must come from the system or the user".into(),
            ));
        }
        Ok(Self { messages, temperature: 0.0, model_id: model_id.into() })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, LlmError> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(LlmError::InvalidInput(format!("temperature {temperature} must be >= 0")));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Text of the last message, which by convention carries the payload.
    pub fn last_text(&self) -> &str {
        self.messages.last().map(|m| m.text.as_str()).unwrap_or_default()
    }

    /// Canonical rendering the fingerprint is computed from: one
    /// `role: text` line per message with whitespace collapsed.
    pub fn key_source(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("{}: {}", m.role, normalize_whitespace(&m.text)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_messages(self.messages.iter().map(|m| (m.role, m.text.as_str())))
    }
}

/// Hash of the `(role, whitespace-normalized text)` sequence.
pub(crate) fn fingerprint_messages<'a>(
    messages: impl IntoIterator<Item = (Role, &'a str)>,
) -> String {
    let mut hasher = Sha256::new();
    for (role, text) in messages {
        hasher.update(role.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(normalize_whitespace(text).as_bytes());
        hasher.update([0x1e]);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure: {message}")]
    Transport { message: String, retriable: bool },
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no scripted response for prompt fingerprint {fingerprint}")]
    MissingScript { fingerprint: String, key_source: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("could not decode provider response: {0}")]
    Decode(String),
    #[error("script file: {0}")]
    Script(String),
}

impl LlmError {
    pub fn is_retriable(&self) -> bool {
        match self {
            LlmError::Transport { retriable, .. } => *retriable,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    /// Short machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            LlmError::Transport { .. } => "transport",
            LlmError::Status { .. } => "provider_status",
            LlmError::MissingScript { .. } => "missing_script",
            LlmError::InvalidInput(_) => "invalid_input",
            LlmError::Decode(_) => "decode",
            LlmError::Script(_) => "script",
        }
    }
}

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;

    /// Model id placed in requests built by the pipeline.
    fn model_id(&self) -> &str {
        "default"
    }
}

/// A text-embedding provider.
pub trait Embedder: Send + Sync {
    fn provider_id(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        (**self).embed(text)
    }
}
