use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, Embedder, EmbeddingVector, LlmError};
use crate::http::{HttpRequest, HttpResponse, HttpTransport};

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// OpenAI-compatible chat-completions client.
pub struct LiveBackend {
    transport: Arc<dyn HttpTransport>,
    config: LiveConfig,
    retry: RetryPolicy,
    sleep: Sleeper,
}

impl LiveBackend {
    pub fn new(transport: Arc<dyn HttpTransport>, config: LiveConfig) -> Self {
        Self { transport, config, retry: RetryPolicy::default(), sleep: Arc::new(thread::sleep) }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Replaces the backoff sleep; tests use a no-op.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }
}

fn endpoint_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

fn authorized(req: HttpRequest, key: &Option<String>) -> HttpRequest {
    match key {
        Some(k) => req.header("Authorization", format!("Bearer {k}")),
        None => req,
    }
}

/// Sends with exponential backoff on retriable failures.
fn send_with_retry(
    transport: &dyn HttpTransport,
    request: &HttpRequest,
    retry: RetryPolicy,
    sleep: &Sleeper,
) -> Result<HttpResponse, LlmError> {
    let mut attempt = 0;
    loop {
        let outcome = match transport.send(request) {
            Ok(resp) if resp.is_success() => return Ok(resp),
            Ok(resp) => LlmError::Status { status: resp.status, body: resp.body },
            Err(e) => LlmError::Transport { message: e.to_string(), retriable: true },
        };
        if !outcome.is_retriable() || attempt >= retry.retries {
            return Err(outcome);
        }
        tracing::warn!(attempt, error = %outcome, "retrying provider call");
        sleep(retry.delay_for(attempt));
        attempt += 1;
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let messages: Vec<Value> = request
            .messages()
            .iter()
            .map(|m| json!({ "role": m.role.as_str(), "content": m.text }))
            .collect();
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature(),
        });
        let http = authorized(
            HttpRequest::post_json(endpoint_url(&self.config.endpoint, "chat/completions"), &body),
            &self.config.api_key,
        );
        let resp = send_with_retry(self.transport.as_ref(), &http, self.retry, &self.sleep)?;
        let value: Value =
            serde_json::from_str(&resp.body).map_err(|e| LlmError::Decode(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Decode("missing choices[0].message.content".into()))
    }

    fn model_id(&self) -> &str {
        &self.config.model
    }
}

/// OpenAI-compatible embeddings client (e.g. a server hosting all-MiniLM-L6-v2).
pub struct LiveEmbedder {
    transport: Arc<dyn HttpTransport>,
    config: LiveConfig,
    dimension: usize,
    retry: RetryPolicy,
    sleep: Sleeper,
}

impl LiveEmbedder {
    /// `dimension` is the provider's fixed output width (384 for MiniLM-L6).
    pub fn new(transport: Arc<dyn HttpTransport>, config: LiveConfig, dimension: usize) -> Self {
        Self {
            transport,
            config,
            dimension,
            retry: RetryPolicy::default(),
            sleep: Arc::new(thread::sleep),
        }
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }
}

impl Embedder for LiveEmbedder {
    fn provider_id(&self) -> &str {
        &self.config.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::InvalidInput("cannot embed empty text".into()));
        }
        let body = json!({ "model": self.config.model, "input": text });
        let http = authorized(
            HttpRequest::post_json(endpoint_url(&self.config.endpoint, "embeddings"), &body),
            &self.config.api_key,
        );
        let resp = send_with_retry(self.transport.as_ref(), &http, self.retry, &self.sleep)?;
        let value: Value =
            serde_json::from_str(&resp.body).map_err(|e| LlmError::Decode(e.to_string()))?;
        let values: Vec<f64> = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Decode("missing data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| LlmError::Decode("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if values.len() != self.dimension {
            return Err(LlmError::Decode(format!(
                "provider returned {} dimensions, expected {}",
                values.len(),
                self.dimension
            )));
        }
        Ok(EmbeddingVector::new(values, self.config.model.clone()))
    }
}
