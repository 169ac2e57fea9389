use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use radioplan::agent::{default_profile, BackendConfig, EventKind, Outcome, Profile, SessionOptions};
use radioplan::project::{ArtifactRef, SessionId};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::state::{lock, AppState, JobRecord, Slot};
use crate::ServiceError;

const PLAN_WAIT: Duration = Duration::from_secs(30);
const DEFAULT_POLL_MS: u64 = 0;
const MAX_POLL_MS: u64 = 60_000;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::Busy(_) => StatusCode::CONFLICT,
            Self::Gone(_) => StatusCode::GONE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", get(list_sessions).post(create_session))
        .route("/api/sessions/{id}", get(session_info))
        .route("/api/sessions/{id}/prompts", post(submit_prompt))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/jobs", get(jobs))
        .route("/api/sessions/{id}/artifacts", get(artifacts))
        .route("/api/sessions/{id}/artifacts/{artifact}", get(artifact))
        .with_state(state)
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("malformed body: {e}")))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Debug, Serialize)]
struct SessionSummary {
    id: SessionId,
}

async fn list_sessions(State(state): State<AppState>) -> ApiResult<Json<Vec<SessionSummary>>> {
    Ok(Json(state.session_ids()?.into_iter().map(|id| SessionSummary { id }).collect()))
}

/// Profile fields a client may replace; the rest keep their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileOverrides {
    character_text: Option<String>,
    task_objective_text: Option<String>,
    constraints_text: Option<String>,
    output_format_spec: Option<String>,
    file_path_root: Option<String>,
    tool_usage_constraints: Option<String>,
}

impl ProfileOverrides {
    fn apply(self) -> Profile {
        let mut p = default_profile();
        let set = |field: &mut String, v: Option<String>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        set(&mut p.character_text, self.character_text);
        set(&mut p.task_objective_text, self.task_objective_text);
        set(&mut p.constraints_text, self.constraints_text);
        set(&mut p.output_format_spec, self.output_format_spec);
        set(&mut p.file_path_root, self.file_path_root);
        set(&mut p.tool_usage_constraints, self.tool_usage_constraints);
        p
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    backend: Option<BackendConfig>,
    default_area: Option<String>,
    profile: Option<ProfileOverrides>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: CreateSession = parse_body(&body)?;
    let options = SessionOptions { default_area: req.default_area, profile: req.profile.map(ProfileOverrides::apply) };
    let slot = tokio::task::spawn_blocking(move || state.create_session(req.backend, options))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": slot.id }))))
}

async fn load(state: &AppState, id: String) -> ApiResult<Arc<Slot>> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || state.slot(&id)).await.map_err(|e| ServiceError::Internal(e.to_string()))?
}

#[derive(Debug, Serialize)]
struct SessionInfo {
    id: SessionId,
    backend: &'static str,
    degraded: bool,
    busy: bool,
    default_area: Option<String>,
    last_event: u64,
    artifacts: usize,
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let slot = load(&state, id).await?;
    let feed = lock(&slot.feed);
    Ok(Json(SessionInfo {
        id: slot.id.clone(),
        backend: slot.backend,
        degraded: slot.degraded,
        busy: slot.busy.load(std::sync::atomic::Ordering::SeqCst),
        default_area: slot.default_area.clone(),
        last_event: feed.last_seq(),
        artifacts: feed.artifacts.len(),
    }))
}

#[derive(Debug, Default, Deserialize)]
struct PromptRequest {
    text: String,
}

#[derive(Debug, Serialize)]
struct PromptAccepted {
    session_id: SessionId,
    turn: u64,
    job_ids: Vec<u64>,
    reused: Vec<u64>,
    /// Set when the turn already finished (clarification, rejection, reuse).
    outcome: Option<Outcome>,
    message: Option<String>,
}

/// Starts a turn and answers once its tasks are planned.
async fn submit_prompt(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<PromptAccepted>)> {
    let req: PromptRequest = parse_body(&body)?;
    let text = req.text.trim().to_string();
    if text.is_empty() {
        return Err(ServiceError::BadRequest("prompt text is empty".into()));
    }
    let slot = load(&state, id).await?;
    if !slot.try_begin_turn() {
        return Err(ServiceError::Busy(slot.id.to_string()));
    }
    let start = lock(&slot.feed).last_seq();
    let mut seq = slot.seq.subscribe();

    let pool = Arc::clone(&state.0.pool);
    let worker = Arc::clone(&slot);
    tokio::spawn(async move {
        let permit = pool.acquire_owned().await;
        let runner = Arc::clone(&worker);
        let joined = tokio::task::spawn_blocking(move || {
            let mut agent = lock(&runner.agent);
            if let Err(e) = agent.step(&text) {
                log::warn!("session {}: {e}", runner.id);
            }
        })
        .await;
        drop(permit);
        if joined.is_err() {
            log::error!("session {}: turn worker panicked", worker.id);
            worker.busy.store(false, std::sync::atomic::Ordering::SeqCst);
        }
    });

    let deadline = tokio::time::Instant::now() + PLAN_WAIT;
    loop {
        if let Some(accepted) = planned_since(&slot, start) {
            return Ok((StatusCode::ACCEPTED, Json(accepted)));
        }
        match tokio::time::timeout_at(deadline, seq.changed()).await {
            Ok(Ok(())) => continue,
            _ => {
                return Ok((
                    StatusCode::ACCEPTED,
                    Json(PromptAccepted {
                        session_id: slot.id.clone(),
                        turn: 0,
                        job_ids: vec![],
                        reused: vec![],
                        outcome: None,
                        message: Some("turn queued; follow the event stream".into()),
                    }),
                ))
            }
        }
    }
}

fn planned_since(slot: &Slot, start: u64) -> Option<PromptAccepted> {
    let feed = lock(&slot.feed);
    let mut accepted: Option<PromptAccepted> = None;
    for e in feed.since(start) {
        match &e.kind {
            EventKind::TurnPlanned { tasks, reused } => {
                accepted = Some(PromptAccepted {
                    session_id: slot.id.clone(),
                    turn: e.turn,
                    job_ids: tasks.clone(),
                    reused: reused.clone(),
                    outcome: None,
                    message: None,
                });
                if !tasks.is_empty() {
                    return accepted;
                }
            }
            EventKind::TurnFinished { outcome, message } => {
                let mut a = accepted.unwrap_or(PromptAccepted {
                    session_id: slot.id.clone(),
                    turn: e.turn,
                    job_ids: vec![],
                    reused: vec![],
                    outcome: None,
                    message: None,
                });
                a.outcome = Some(*outcome);
                a.message = Some(message.clone());
                return Some(a);
            }
            _ => {}
        }
    }
    None
}

#[derive(Debug, Deserialize)]
struct EventQuery {
    #[serde(default)]
    since: u64,
    /// Long-poll budget when nothing newer than `since` exists yet.
    timeout_ms: Option<u64>,
}

#[derive(Debug, Serialize)]
struct EventPage {
    events: Vec<radioplan::agent::AgentEvent>,
    /// Cursor for the next request.
    next: u64,
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventQuery>,
) -> ApiResult<Json<EventPage>> {
    let slot = load(&state, id).await?;
    let mut seq = slot.seq.subscribe();
    let wait = Duration::from_millis(q.timeout_ms.unwrap_or(DEFAULT_POLL_MS).min(MAX_POLL_MS));
    let deadline = tokio::time::Instant::now() + wait;
    loop {
        {
            let feed = lock(&slot.feed);
            let events = feed.since(q.since).to_vec();
            if !events.is_empty() || tokio::time::Instant::now() >= deadline {
                let next = events.last().map_or(q.since, |e| e.seq);
                return Ok(Json(EventPage { events, next }));
            }
        }
        if tokio::time::timeout_at(deadline, seq.changed()).await.is_err() {
            continue;
        }
    }
}

async fn jobs(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<JobRecord>>> {
    let slot = load(&state, id).await?;
    let feed = lock(&slot.feed);
    Ok(Json(feed.jobs.values().cloned().collect()))
}

async fn artifacts(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<ArtifactRef>>> {
    let slot = load(&state, id).await?;
    let feed = lock(&slot.feed);
    Ok(Json(feed.artifacts.clone()))
}

async fn artifact(
    State(state): State<AppState>,
    Path((id, artifact)): Path<(String, String)>,
) -> ApiResult<Response> {
    let slot = load(&state, id).await?;
    let found = lock(&slot.feed).artifacts.iter().find(|a| a.id.0 == artifact).cloned();
    let a = found.ok_or_else(|| ServiceError::NotFound(format!("artifact {artifact}")))?;
    let path = state.0.project.resolve(&a.path);
    match tokio::fs::read(&path).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, a.kind.content_type())], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(ServiceError::Gone(format!("artifact {artifact} is no longer on disk")))
        }
        Err(e) => Err(ServiceError::Internal(e.to_string())),
    }
}
