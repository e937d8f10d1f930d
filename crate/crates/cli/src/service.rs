//! HTTP/JSON service over the pipeline.
//!
//! - `POST /ask` with `{"question": "...", "validate": true}` answers and
//!   returns `{"final": "...", "transcript_id": "..."}`.
//! - `GET /transcripts/{id}` returns the stored transcript.
//! - `GET /issues?label=..&state=..&number=1,2&fields=title,labels&limit=5`
//!   runs a structured query over the store.
//! - `GET /health` reports liveness and the store size.
//!
//! Malformed requests get 400 and pipeline failures 502, both with a body
//! `{"error": "<class>", "message": "..."}`. Transcripts are kept in memory
//! until the process exits.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chime_core::store::StructuredQuery;
use chime_core::{AskOptions, Pipeline, PipelineTranscript};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub struct AppState {
    pipeline: Arc<Pipeline>,
    transcripts: RwLock<HashMap<String, PipelineTranscript>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(pipeline: Pipeline) -> Arc<Self> {
        Arc::new(Self { pipeline: Arc::new(pipeline), transcripts: RwLock::default(), next_id: AtomicU64::new(1) })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskRequest {
    pub question: String,
    #[serde(default = "yes")]
    pub validate: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskResponse {
    #[serde(rename = "final")]
    pub final_response: String,
    pub transcript_id: String,
}

fn error(status: StatusCode, class: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": class, "message": message.into() }))).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/transcripts/:id", get(transcript))
        .route("/issues", get(issues))
        .route("/health", get(health))
        .with_state(state)
}

async fn ask(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: AskRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid-request", e.to_string()),
    };
    if req.question.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "invalid-request", "question is empty");
    }
    let n = state.next_id.fetch_add(1, Ordering::Relaxed);
    let opts = AskOptions { validate: req.validate, ablation: None, transcript_id: Some(format!("ask-{n}")) };
    let pipeline = state.pipeline.clone();
    let outcome = match tokio::task::spawn_blocking(move || pipeline.ask(&req.question, &opts)).await {
        Ok(Ok(o)) => o,
        Ok(Err(e)) => return error(StatusCode::BAD_GATEWAY, e.class(), e.to_string()),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    };
    let id = outcome.transcript.id.clone();
    state.transcripts.write().expect("transcript map poisoned").insert(id.clone(), outcome.transcript);
    Json(AskResponse { final_response: outcome.final_response, transcript_id: id }).into_response()
}

async fn transcript(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.transcripts.read().expect("transcript map poisoned").get(&id) {
        Some(t) => Json(t.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, "not-found", format!("no transcript {id}")),
    }
}

/// Query parameters accepted by `/issues` and the predicate field each
/// one maps to.
const TEXT_PARAMS: [&str; 7] = ["label", "assignee", "state", "repo", "exception_type", "class", "file"];

/// Builds a structured query from `/issues` parameters. No filter means
/// every issue.
pub fn issues_query(params: &BTreeMap<String, String>) -> Result<StructuredQuery, String> {
    let mut filters = Vec::new();
    let mut query = serde_json::Map::new();
    for (key, value) in params {
        let k = key.as_str();
        if TEXT_PARAMS.contains(&k) {
            filters.push(json!({ "field": k, "value": value }));
        } else if k == "number" {
            let values = value
                .split(',')
                .map(|v| v.trim().parse::<u64>().map_err(|_| format!("bad issue number {v:?}")))
                .collect::<Result<Vec<_>, _>>()?;
            filters.push(json!({ "field": "number", "values": values }));
        } else if let Some(field) = k.strip_suffix("_within_days").filter(|f| *f == "created" || *f == "updated") {
            let days: u32 = value.parse().map_err(|_| format!("bad day count {value:?}"))?;
            filters.push(json!({ "field": format!("{field}_at"), "within_days": days }));
        } else if k == "fields" {
            let fields: Vec<&str> = value.split(',').map(str::trim).filter(|f| !f.is_empty()).collect();
            query.insert("projection".into(), json!(fields));
        } else if k == "limit" {
            let n: u64 = value.parse().map_err(|_| format!("bad limit {value:?}"))?;
            query.insert("limit".into(), json!(n));
        } else {
            return Err(format!("unknown parameter {k:?}"));
        }
    }
    query.insert("select_all".into(), json!(filters.is_empty()));
    query.insert("filters".into(), Value::Array(filters));
    StructuredQuery::from_json(&Value::Object(query).to_string()).map_err(|e| e.0)
}

async fn issues(State(state): State<Arc<AppState>>, Query(params): Query<BTreeMap<String, String>>) -> Response {
    let query = match issues_query(&params) {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid-request", e),
    };
    match state.pipeline.store.execute(&query) {
        Ok(rows) => Json(rows).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, "invalid-request", e.to_string()),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    Json(json!({ "status": "ok", "issues": state.pipeline.store.len() })).into_response()
}

/// Serves until interrupted.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
