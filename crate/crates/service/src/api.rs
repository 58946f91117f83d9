//! HTTP routes.

use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use titekit_core::conduct::{LogError, NewEvent, TrialConfig, TrialEvent, TrialSnapshot};
use titekit_core::{generate_table, render_table, Design, DesignParams, Engine, TableFormat};

use crate::store::{Store, StoreError};

pub type AppState = Arc<Store>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    trial_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), trial_id: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::DuplicateKey(_) => StatusCode::CONFLICT,
            StoreError::Log(LogError::Regression(_) | LogError::Closed(_)) => StatusCode::CONFLICT,
            StoreError::Log(LogError::UnknownPatient(_) | LogError::Invalid(_)) | StoreError::Invalid(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        let trial_id = match &e {
            StoreError::DuplicateKey(id) => Some(id.clone()),
            _ => None,
        };
        Self { status, message: e.to_string(), trial_id }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(id) = self.trial_id {
            body["trial_id"] = json!(id);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| {
        let status = if e.is_data() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::BAD_REQUEST };
        ApiError::new(status, format!("invalid body: {e}"))
    })
}

fn parse_at(raw: Option<&str>) -> ApiResult<Option<DateTime<Utc>>> {
    raw.map(|s| {
        DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| ApiError::bad_request(format!("malformed timestamp {s:?}: {e}")))
    })
    .transpose()
}

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/trials", post(create_trial).get(list_trials))
        .route("/trials/{id}/events", post(append_event).get(list_events))
        .route("/trials/{id}/recommendation", get(recommendation))
        .route("/trials/{id}/state", get(state))
        .route("/tables", get(tables))
        .with_state(store)
}

#[derive(Deserialize)]
struct CreateTrial {
    #[serde(flatten)]
    config: TrialConfig,
    /// Creation instant; defaults to the server clock.
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
}

#[derive(Serialize)]
struct Created {
    trial_id: String,
    event: TrialEvent,
}

async fn create_trial(State(store): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let mut req: CreateTrial = parse_body(&body)?;
    if let Some(k) = headers.get("idempotency-key") {
        let k = k.to_str().map_err(|_| ApiError::bad_request("idempotency key must be ASCII"))?;
        req.config.idempotency_key = Some(k.to_string());
    }
    let (trial_id, event) = store.create(req.config, req.created_at.unwrap_or_else(Utc::now))?;
    tracing::info!(trial = %trial_id, "trial created");
    Ok((StatusCode::CREATED, Json(Created { trial_id, event })).into_response())
}

async fn list_trials(State(store): State<AppState>) -> Json<Vec<String>> {
    Json(store.ids())
}

#[derive(Serialize)]
struct Appended {
    event: TrialEvent,
    warnings: Vec<String>,
}

async fn append_event(State(store): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Appended>> {
    store.log(&id)?;
    let ev: NewEvent = parse_body(&body)?;
    let (event, warnings) = store.append(&id, ev)?;
    Ok(Json(Appended { event, warnings }))
}

async fn list_events(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<TrialEvent>>> {
    Ok(Json(store.log(&id)?.events().to_vec()))
}

#[derive(Deserialize)]
struct AtQuery {
    at: Option<String>,
}

async fn recommendation(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AtQuery>,
) -> ApiResult<Json<TrialSnapshot>> {
    let log = store.log(&id)?;
    let at = parse_at(q.at.as_deref())?.unwrap_or_else(Utc::now);
    log.snapshot(at).map(Json).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Serialize)]
struct TrialState {
    trial_id: String,
    config: TrialConfig,
    event_count: usize,
    last_event_id: u64,
    closed: bool,
    snapshot: TrialSnapshot,
}

/// Snapshot at `at`, or at the last recorded event.
async fn state(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AtQuery>,
) -> ApiResult<Json<TrialState>> {
    let log = store.log(&id)?;
    let last = log.events().last().expect("non-empty log");
    let at = parse_at(q.at.as_deref())?.unwrap_or(last.timestamp);
    let snapshot = log.snapshot(at).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(TrialState {
        trial_id: id,
        config: log.config().clone(),
        event_count: log.events().len(),
        last_event_id: last.event_id,
        closed: log.is_closed(),
        snapshot,
    }))
}

#[derive(Deserialize)]
struct TableQuery {
    phi: Option<f64>,
    delta1: Option<f64>,
    delta2: Option<f64>,
    cohort: Option<usize>,
    max_n: Option<usize>,
    eta: Option<f64>,
    design: Option<String>,
    format: Option<String>,
}

async fn tables(Query(q): Query<TableQuery>) -> ApiResult<Response> {
    let d = DesignParams::<f64>::default();
    let params = DesignParams {
        phi: q.phi.unwrap_or(d.phi),
        delta1: q.delta1.unwrap_or(d.delta1),
        delta2: q.delta2.unwrap_or(d.delta2),
        cohort_size: q.cohort.unwrap_or(d.cohort_size),
        max_n: q.max_n.unwrap_or(12),
        eta: q.eta.unwrap_or(d.eta),
        ..d
    };
    let design = q.design.as_deref().map(Design::from_str).transpose().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let format = TableFormat::from_str(q.format.as_deref().unwrap_or("json")).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let engine = Engine::new(design.unwrap_or_default(), params).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let rows = generate_table(&engine).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let text = render_table(&rows, format).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let ctype = match format {
        TableFormat::Json => "application/json",
        TableFormat::Csv => "text/csv; charset=utf-8",
        TableFormat::Markdown => "text/markdown; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, ctype)], text).into_response())
}
