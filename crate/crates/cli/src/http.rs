//! JSON-over-HTTP front end for [`SessionService`].
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | `GET` | `/sessions` | | `{"sessions": [...]}` |
//! | `POST` | `/sessions` | `NewSession` | `201 {"session_id"}` |
//! | `GET` | `/sessions/{id}` | | blinded status view |
//! | `GET` | `/sessions/{id}/next` | | next assignment or `{"status":"complete"}` |
//! | `POST` | `/sessions/{id}/rollouts/{n}/rubric` | `{answers, failure_note?, amend?}` | acknowledgment |
//! | `POST` | `/sessions/{id}/notes` | `{text, rollout_index?}` | `204` |
//! | `POST` | `/sessions/{id}/finalize` | `{force?}` (optional) | unblinded summary |
//! | `GET` | `/sessions/{id}/summary` | | unblinded summary |
//! | `GET` | `/sessions/{id}/report` | `?format=markdown\|json` | report |
//!
//! Errors are `{"error": code, "detail": text}`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rollout_eval_core::report::{render, Format, ReportError, ReportOptions};
use rollout_eval_core::service::{NewSession, ServiceError, SessionService};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

#[derive(Clone)]
struct AppState {
    service: Arc<SessionService>,
    options: Arc<ReportOptions>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl ApiError {
    fn bad_request(detail: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "bad_request", detail: detail.into() }
    }
}

fn status_for(code: &str) -> StatusCode {
    match code {
        "unknown_session" | "unknown_rollout" => StatusCode::NOT_FOUND,
        "bad_session_id" | "unknown_format" => StatusCode::BAD_REQUEST,
        "invalid_task" | "invalid_plan" | "bad_trace" | "missing_answers" | "unknown_questions" => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        "session_exists" | "session_unblinded" | "not_current" | "session_blinded" | "pending_rollouts"
        | "amend_mismatch" | "invalid_event" => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let code = e.code();
        Self { status: status_for(code), code, detail: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "detail": self.detail }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking service work (file writes with fsync) off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", detail: e.to_string() })?
        .map_err(ApiError::from)
}

/// JSON body parsing with errors in the API error shape. An empty body
/// parses as `{}`.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn rollout_index(raw: &str) -> ApiResult<usize> {
    raw.parse().map_err(|_| ApiError::bad_request(format!("rollout index `{raw}` is not a non-negative integer")))
}

pub fn router(service: Arc<SessionService>, options: ReportOptions, static_dir: Option<&Path>) -> Router {
    let state = AppState { service, options: Arc::new(options) };
    let api = Router::new()
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/rollouts/{n}/rubric", post(submit_rubric))
        .route("/sessions/{id}/notes", post(add_note))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/report", get(report))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async {
            ApiError { status: StatusCode::NOT_FOUND, code: "not_found", detail: "no such endpoint".into() }
        }),
    }
}

async fn list_sessions(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "sessions": s.service.session_ids() }))
}

async fn create_session(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let request: NewSession = parse_body(&body)?;
    let id = blocking(move || s.service.create_session(&request)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

async fn status(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    Ok(Json(s.service.status(&id)?).into_response())
}

async fn next(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let next = blocking(move || s.service.next_assignment(&id)).await?;
    Ok(Json(next).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RubricSubmission {
    answers: BTreeMap<String, bool>,
    #[serde(default)]
    failure_note: String,
    #[serde(default)]
    amend: bool,
}

async fn submit_rubric(
    State(s): State<AppState>,
    UrlPath((id, n)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let index = rollout_index(&n)?;
    let sub: RubricSubmission = parse_body(&body)?;
    let ack = blocking(move || s.service.submit_rubric(&id, index, sub.answers, sub.failure_note, sub.amend)).await?;
    Ok(Json(ack).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoteRequest {
    text: String,
    #[serde(default)]
    rollout_index: Option<usize>,
}

async fn add_note(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let note: NoteRequest = parse_body(&body)?;
    blocking(move || s.service.add_note(&id, note.rollout_index, note.text)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FinalizeRequest {
    #[serde(default)]
    force: bool,
}

async fn finalize(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let req: FinalizeRequest = parse_body(&body)?;
    let summary = blocking(move || s.service.finalize_session(&id, req.force, &s.options)).await?;
    Ok(Json(summary).into_response())
}

async fn summary(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let summary = blocking(move || s.service.summary(&id, &s.options)).await?;
    Ok(Json(summary).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn report(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Response> {
    let format: Format = q
        .format
        .as_deref()
        .unwrap_or("markdown")
        .parse()
        .map_err(|e: ReportError| ApiError::from(ServiceError::Report(e)))?;
    let report = blocking(move || s.service.report(&id, &s.options)).await?;
    let content_type = match format {
        Format::Markdown => "text/markdown; charset=utf-8",
        Format::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], render(&report, format)).into_response())
}
