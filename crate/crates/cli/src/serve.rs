//! Stateless decision service over a frozen Q-table.
//!
//! - `POST /v1/action` with `{"ui": {var: label, ...}, "prefs": {...}}` and an
//!   optional `"domain_hash"` returns the greedy action.
//! - `GET /v1/metadata` describes the loaded table.
//! - `GET /v1/health` answers 200 while a table is loaded.
//!
//! Status codes: 400 unknown variable or value label, 409 declared domain
//! hash differs from the served one, 422 body that is not a valid request.

use std::collections::BTreeMap;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use aui_rl::{ActionKind, DomainSpec, QTable, StateVector, UiConfig, UserPrefs};

#[derive(Debug, Clone)]
pub struct ServeState {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    domain: DomainSpec,
    q: QTable,
    hash: String,
}

impl ServeState {
    pub fn new(domain: DomainSpec, q: QTable) -> Self {
        let hash = domain.hash().to_string();
        ServeState {
            inner: Arc::new(Inner { domain, q, hash }),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub ui: BTreeMap<String, String>,
    pub prefs: BTreeMap<String, String>,
    #[serde(default)]
    pub domain_hash: Option<String>,
}

#[derive(Debug, Serialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionKindBody {
    Set { variable: String, value: String },
    NoOp,
}

#[derive(Debug, Serialize)]
pub struct ActionResponse {
    pub action_index: usize,
    pub action: String,
    pub kind: ActionKindBody,
    pub q_value: f64,
}

struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            path: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.kind, "message": self.message});
        if let Some(path) = self.path {
            body["path"] = json!(path);
        }
        (self.status, Json(body)).into_response()
    }
}

fn decide(state: &Inner, body: &[u8]) -> Result<ActionResponse, ApiError> {
    let req: ActionRequest = serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_body", e.to_string()))?;
    if let Some(declared) = &req.domain_hash {
        if !declared.eq_ignore_ascii_case(&state.hash) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "hash_mismatch",
                format!("request declares domain {declared}, serving {}", state.hash),
            ));
        }
    }
    let labels = |map: &BTreeMap<String, String>, path: &str| {
        state.domain.indices_from_labels(map, path).map_err(|e| {
            let path = match &e {
                aui_rl::Error::UnknownLabel { path, .. } => Some(path.clone()),
                _ => None,
            };
            ApiError {
                status: StatusCode::BAD_REQUEST,
                kind: e.kind(),
                message: e.to_string(),
                path,
            }
        })
    };
    let s = StateVector {
        ui: UiConfig::new(labels(&req.ui, "ui")?),
        prefs: UserPrefs::new(labels(&req.prefs, "prefs")?),
    };
    let index = state
        .domain
        .encode_state(&s)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.kind(), e.to_string()))?;
    let best = state.q.greedy_action(index);
    let action = state.domain.action_catalog()[best];
    let kind = match action.kind {
        ActionKind::Set { variable, value } => {
            let var = &state.domain.variables()[variable];
            ActionKindBody::Set {
                variable: var.name.clone(),
                value: var.values[value].clone(),
            }
        }
        ActionKind::NoOp => ActionKindBody::NoOp,
    };
    Ok(ActionResponse {
        action_index: best,
        action: state.domain.action_name(&action),
        kind,
        q_value: state.q.get(index, best),
    })
}

async fn action(State(state): State<ServeState>, body: Bytes) -> Response {
    match decide(&state.inner, &body) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn metadata(State(state): State<ServeState>) -> Json<Value> {
    let s = &state.inner;
    let meta = &s.q.meta;
    Json(json!({
        "domain": s.domain.name(),
        "domain_hash": s.hash,
        "variables": s.domain.to_json()["variables"],
        "actions": s.domain.action_catalog().iter().map(|a| s.domain.action_name(a)).collect::<Vec<_>>(),
        "sigma": meta.reward.sigma,
        "episodes_trained": meta.episodes_trained,
        "seed": meta.seed,
        "max_steps": meta.max_steps,
    }))
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(state: ServeState) -> Router {
    Router::new()
        .route("/v1/action", post(action))
        .route("/v1/metadata", get(metadata))
        .route("/v1/health", get(health))
        .with_state(state)
}

pub async fn run(state: ServeState, host: &str, port: u16) -> Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    info!("serving on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("http server")
}
