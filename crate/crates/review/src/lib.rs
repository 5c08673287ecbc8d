//! HTTP service for the human review step over proposed specifications.
//!
//! | method | path                          | body                        |
//! |--------|-------------------------------|-----------------------------|
//! | GET    | `/api/specs`                  |                             |
//! | GET    | `/api/specs/{id}`             |                             |
//! | POST   | `/api/specs/{id}/decisions`   | [`DecisionRequest`]         |
//! | POST   | `/api/specs/{id}/approve`     | [`ApproveRequest`]          |
//!
//! Mutations take the reviewer from the `X-Reviewer` header. Errors carry a
//! JSON body `{"error": kind, "message": text}`.

pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cadmap_core::clock::{Clock, SystemClock};
use cadmap_core::error::ReviewError;
use cadmap_core::{
    apply_review_decisions, approve, MappingStatus, ReviewAction, ReviewDecision, UnifiedSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

pub use store::{SpecStore, SpecSummary, StoreError};

pub const REVIEWER_HEADER: &str = "x-reviewer";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SpecStore>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(store: SpecStore) -> Self {
        AppState {
            store: Arc::new(store),
            clock: Arc::new(SystemClock),
        }
    }
}

/// One reviewer decision. Exactly one of `mapping_id` / `entity_id`
/// identifies the item; an entity id resolves to its flagged mapping.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct DecisionRequest {
    #[serde(default)]
    pub mapping_id: Option<String>,
    #[serde(default)]
    pub entity_id: Option<String>,
    #[serde(flatten)]
    pub action: ReviewAction,
    #[serde(default)]
    pub rationale: Option<String>,
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
pub struct ApproveRequest {
    #[serde(default)]
    pub expected_revision: Option<u64>,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    Invalid(String),
    BadRequest(String),
    Internal(String),
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        if e.status() == StatusCode::UNPROCESSABLE_ENTITY {
            ApiError::Invalid(e.body_text())
        } else {
            ApiError::BadRequest(e.body_text())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, "conflict", m),
            ApiError::Invalid(m) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid", m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        (status, Json(json!({ "error": kind, "message": message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::NotFound(msg),
            StoreError::Stale { .. } => ApiError::Conflict(msg),
            StoreError::Review(r) => match r {
                ReviewError::AlreadyApproved | ReviewError::FlaggedRemaining(_) => {
                    ApiError::Conflict(msg)
                }
                ReviewError::UnknownMapping(_) | ReviewError::UnknownFeature(_) => {
                    ApiError::Invalid(msg)
                }
                ReviewError::MissingReviewer => ApiError::BadRequest(msg),
            },
            StoreError::Io(_) => ApiError::Internal(msg),
        }
    }
}

fn reviewer(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(REVIEWER_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| ApiError::BadRequest(format!("missing {REVIEWER_HEADER} header")))
}

fn resolve_mapping_id(spec: &UnifiedSpec, req: &DecisionRequest) -> Result<String, ReviewError> {
    match (&req.mapping_id, &req.entity_id) {
        (Some(id), _) => Ok(id.clone()),
        (None, Some(entity)) => {
            let of_entity: Vec<_> = spec
                .mappings
                .iter()
                .filter(|m| &m.entity_id == entity)
                .collect();
            let flagged: Vec<_> = of_entity
                .iter()
                .filter(|m| m.status == MappingStatus::Flagged)
                .collect();
            match (flagged.as_slice(), of_entity.as_slice()) {
                ([only], _) => Ok(only.id.clone()),
                ([], [only]) => Ok(only.id.clone()),
                _ => Err(ReviewError::UnknownMapping(format!(
                    "entity {entity} does not identify a single mapping"
                ))),
            }
        }
        (None, None) => Err(ReviewError::UnknownMapping(
            "mapping_id or entity_id is required".into(),
        )),
    }
}

async fn list_specs(State(state): State<AppState>) -> Result<Json<Vec<SpecSummary>>, ApiError> {
    Ok(Json(state.store.list()?))
}

async fn get_spec(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<UnifiedSpec>, ApiError> {
    Ok(Json(state.store.get(&id)?))
}

async fn post_decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<UnifiedSpec>, ApiError> {
    let reviewer = reviewer(&headers)?;
    let Json(req) = body?;
    let clock = state.clock.clone();
    let spec = state.store.update(&id, req.expected_revision, |spec| {
        let decision = ReviewDecision {
            mapping_id: resolve_mapping_id(spec, &req)?,
            action: req.action.clone(),
            reviewer: reviewer.clone(),
            rationale: req.rationale.clone(),
        };
        apply_review_decisions(spec, &[decision], clock.as_ref())
    })?;
    log::info!(
        "spec {id}: {reviewer} decision applied, revision {}",
        spec.revision
    );
    Ok(Json(spec))
}

async fn post_approve(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<UnifiedSpec>, ApiError> {
    let reviewer = reviewer(&headers)?;
    // The body is optional; an empty one means no revision check.
    let expected = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        serde_json::from_slice::<ApproveRequest>(&body)
            .map_err(|e| ApiError::BadRequest(e.to_string()))?
            .expected_revision
    };
    let clock = state.clock.clone();
    let spec = state.store.update(&id, expected, |spec| {
        approve(spec, &reviewer, clock.as_ref())
    })?;
    log::info!("spec {id}: approved by {reviewer}");
    Ok(Json(spec))
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/specs", get(list_specs))
        .route("/api/specs/{id}", get(get_spec))
        .route("/api/specs/{id}/decisions", post(post_decision))
        .route("/api/specs/{id}/approve", post(post_approve))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(
    addr: SocketAddr,
    state: AppState,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir)).await
}
