//! Pipeline configuration and its layered sources.
//!
//! Values are resolved as command-line flag, then environment, then config
//! file, then built-in default. Each layer is a [`ConfigLayer`] whose set
//! fields override the layers below it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::llm::Embedder;

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_K: usize = 4;
pub const DEFAULT_SNIPPET_BUDGET: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Base URL of an OpenAI-compatible endpoint. `None` means scripted only.
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub embedding_provider: String,
    pub temperature: f64,
    pub similarity_threshold: f64,
    pub retrieval_k: usize,
    pub snippet_budget: usize,
    pub store_path: PathBuf,
    pub transcript_dir: Option<PathBuf>,
    pub cove_enabled: bool,
    pub mt_enabled: bool,
    pub query_planning: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-3.5-turbo".into(),
            api_key_env: "CHIME_API_KEY".into(),
            embedding_provider: crate::llm::HashedBowEmbedder::default().provider_id().to_string(),
            temperature: 0.0,
            similarity_threshold: DEFAULT_THRESHOLD,
            retrieval_k: DEFAULT_K,
            snippet_budget: DEFAULT_SNIPPET_BUDGET,
            store_path: PathBuf::from("chime-store.jsonl"),
            transcript_dir: None,
            cove_enabled: true,
            mt_enabled: true,
            query_planning: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// One configuration source; unset fields defer to lower layers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub embedding_provider: Option<String>,
    pub temperature: Option<f64>,
    pub similarity_threshold: Option<f64>,
    pub retrieval_k: Option<usize>,
    pub snippet_budget: Option<usize>,
    pub store_path: Option<PathBuf>,
    pub transcript_dir: Option<PathBuf>,
    pub cove_enabled: Option<bool>,
    pub mt_enabled: Option<bool>,
    pub query_planning: Option<bool>,
}

/// Environment variable names read by [`ConfigLayer::from_env`].
pub const ENV_VARS: [&str; 13] = [
    "CHIME_ENDPOINT",
    "CHIME_MODEL",
    "CHIME_API_KEY_ENV",
    "CHIME_EMBEDDING_PROVIDER",
    "CHIME_TEMPERATURE",
    "CHIME_SIMILARITY_THRESHOLD",
    "CHIME_RETRIEVAL_K",
    "CHIME_SNIPPET_BUDGET",
    "CHIME_STORE",
    "CHIME_TRANSCRIPT_DIR",
    "CHIME_COVE",
    "CHIME_MT",
    "CHIME_QUERY_PLANNING",
];

fn parse_env<T: std::str::FromStr>(name: &str, value: Option<String>) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .map(|v| {
            v.trim().parse::<T>().map_err(|e| ConfigError::Env { name: name.into(), message: e.to_string() })
        })
        .transpose()
}

impl ConfigLayer {
    pub fn from_toml(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })
    }

    /// Reads `CHIME_*` variables through `lookup`, normally `std::env::var`.
    pub fn from_env(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |name: &str| lookup(name).filter(|v| !v.trim().is_empty());
        Ok(Self {
            endpoint: get("CHIME_ENDPOINT"),
            model: get("CHIME_MODEL"),
            api_key_env: get("CHIME_API_KEY_ENV"),
            embedding_provider: get("CHIME_EMBEDDING_PROVIDER"),
            temperature: parse_env("CHIME_TEMPERATURE", get("CHIME_TEMPERATURE"))?,
            similarity_threshold: parse_env("CHIME_SIMILARITY_THRESHOLD", get("CHIME_SIMILARITY_THRESHOLD"))?,
            retrieval_k: parse_env("CHIME_RETRIEVAL_K", get("CHIME_RETRIEVAL_K"))?,
            snippet_budget: parse_env("CHIME_SNIPPET_BUDGET", get("CHIME_SNIPPET_BUDGET"))?,
            store_path: get("CHIME_STORE").map(PathBuf::from),
            transcript_dir: get("CHIME_TRANSCRIPT_DIR").map(PathBuf::from),
            cove_enabled: parse_env("CHIME_COVE", get("CHIME_COVE"))?,
            mt_enabled: parse_env("CHIME_MT", get("CHIME_MT"))?,
            query_planning: parse_env("CHIME_QUERY_PLANNING", get("CHIME_QUERY_PLANNING"))?,
        })
    }

    fn apply(self, c: &mut PipelineConfig) {
        if let Some(v) = self.endpoint {
            c.endpoint = Some(v);
        }
        if let Some(v) = self.model {
            c.model = v;
        }
        if let Some(v) = self.api_key_env {
            c.api_key_env = v;
        }
        if let Some(v) = self.embedding_provider {
            c.embedding_provider = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.similarity_threshold {
            c.similarity_threshold = v;
        }
        if let Some(v) = self.retrieval_k {
            c.retrieval_k = v;
        }
        if let Some(v) = self.snippet_budget {
            c.snippet_budget = v;
        }
        if let Some(v) = self.store_path {
            c.store_path = v;
        }
        if let Some(v) = self.transcript_dir {
            c.transcript_dir = Some(v);
        }
        if let Some(v) = self.cove_enabled {
            c.cove_enabled = v;
        }
        if let Some(v) = self.mt_enabled {
            c.mt_enabled = v;
        }
        if let Some(v) = self.query_planning {
            c.query_planning = v;
        }
    }
}

impl PipelineConfig {
    /// Applies `layers` from lowest to highest precedence over the defaults
    /// and validates the result.
    pub fn resolve(layers: impl IntoIterator<Item = ConfigLayer>) -> Result<Self, ConfigError> {
        let mut config = PipelineConfig::default();
        for layer in layers {
            layer.apply(&mut config);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "similarity_threshold must be in (0, 1), got {}",
                self.similarity_threshold
            )));
        }
        if self.retrieval_k == 0 {
            return Err(ConfigError::Invalid("retrieval_k must be at least 1".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ConfigError::Invalid(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.snippet_budget == 0 {
            return Err(ConfigError::Invalid("snippet_budget must be at least 1".into()));
        }
        Ok(())
    }
}
