//! HTTP session service consumed by the browser UI.
//!
//! Every session owns its own state machine behind a mutex, so events for one
//! session are applied strictly in order while different sessions proceed
//! independently. Bodies and responses are JSON; errors have the shape
//! `{"error": {"code": ..., "message": ...}}`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thumbkey_core::metrics::trials_to_jsonl;
use thumbkey_core::session::SessionError;
use thumbkey_core::{Action, Decoder, KeyLabel, KeyboardLayout, Lexicon, MetricsReport, PhraseSchedule, PhraseSet, Session, TrialHeader};
use uuid::Uuid;

/// Tracking noise the UI injects client-side; the service only records it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub jitter_mm: f64,
    #[serde(default)]
    pub latency_ms: f64,
}

impl NoiseConfig {
    fn check(&self) -> Result<(), ApiError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.jitter_mm) && ok(self.latency_ms) {
            Ok(())
        } else {
            Err(ApiError::bad_request("noise values must be finite and non-negative"))
        }
    }
}

pub struct ServiceConfig {
    /// Layout used when a session does not name one.
    pub default_layout: KeyboardLayout,
    pub lexicon: Arc<Lexicon>,
    pub phrases: Arc<PhraseSet>,
    pub seed: u64,
    pub noise: NoiseConfig,
    /// Where submitted trials are written on close and on shutdown.
    pub log_dir: Option<PathBuf>,
}

struct Entry {
    session: Session,
    schedule: PhraseSchedule,
    layout: String,
    noise: NoiseConfig,
}

pub struct ServiceState {
    decoders: HashMap<String, Arc<Decoder>>,
    default_layout: String,
    phrases: Arc<PhraseSet>,
    seed: u64,
    noise: NoiseConfig,
    log_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<Uuid, Arc<tokio::sync::Mutex<Entry>>>>,
}

pub type SharedState = Arc<ServiceState>;

impl ServiceState {
    pub fn new(config: ServiceConfig) -> SharedState {
        let mut decoders = HashMap::new();
        for name in ["original", "enlarged"] {
            let layout = thumbkey_core::build_layout(name, &Default::default()).expect("presets build");
            decoders.insert(name.to_string(), Arc::new(Decoder::new(&layout, Arc::clone(&config.lexicon))));
        }
        let default_layout = config.default_layout.name().to_string();
        decoders.insert(default_layout.clone(), Arc::new(Decoder::new(&config.default_layout, config.lexicon)));
        Arc::new(ServiceState {
            decoders,
            default_layout,
            phrases: config.phrases,
            seed: config.seed,
            noise: config.noise,
            log_dir: config.log_dir,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    fn entry(&self, id: &str) -> Result<(Uuid, Arc<tokio::sync::Mutex<Entry>>), ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        let sessions = self.sessions.lock().expect("session map lock");
        sessions.get(&uuid).cloned().map(|e| (uuid, e)).ok_or_else(|| ApiError::not_found(id))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    fn write_log(&self, id: Uuid, entry: &Entry) -> std::io::Result<bool> {
        let Some(dir) = &self.log_dir else { return Ok(false) };
        if entry.session.completed().is_empty() {
            return Ok(false);
        }
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{id}.jsonl")), trials_to_jsonl(entry.session.completed()))?;
        Ok(true)
    }
}

/// Writes the submitted trials of every open session. Returns the number of
/// files written.
pub async fn flush_all(state: &SharedState) -> std::io::Result<usize> {
    let entries: Vec<(Uuid, Arc<tokio::sync::Mutex<Entry>>)> =
        state.sessions.lock().expect("session map lock").iter().map(|(k, v)| (*k, Arc::clone(v))).collect();
    let mut written = 0;
    for (id, entry) in entries {
        let entry = entry.lock().await;
        if state.write_log(id, &entry)? {
            written += 1;
        }
    }
    Ok(written)
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/show_phrase", post(show_phrase))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/suggestions", get(get_suggestions))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/metrics", get(fetch_metrics))
        .route("/sessions/{id}/log", get(export_log))
        .route("/layouts/{name}", get(get_layout))
        .with_state(state)
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError { status: StatusCode::BAD_REQUEST, code: "bad_request", message: message.into() }
    }

    fn not_found(id: &str) -> ApiError {
        ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: format!("no session `{id}`") }
    }

    fn from_session(e: SessionError) -> ApiError {
        let (status, code) = match e {
            SessionError::Illegal { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            SessionError::Exhausted { .. } => (StatusCode::CONFLICT, "phrases_exhausted"),
            SessionError::OutOfOrder { .. } | SessionError::InvalidEvent(_) => (StatusCode::BAD_REQUEST, "invalid_event"),
            SessionError::NoPhrases { .. } | SessionError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError { status, code, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

/// Parses a JSON body; an empty body reads as `{}`.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let text: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(text).map_err(|e| ApiError::bad_request(format!("malformed payload: {e}")))
}

// ---------------------------------------------------------------------------
// Handlers

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenRequest {
    #[serde(default)]
    layout: Option<String>,
    #[serde(default)]
    noise: Option<NoiseConfig>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct SessionView {
    id: String,
    layout: String,
    noise: NoiseConfig,
    phase: String,
    presented: String,
    committed: String,
    tap_context: usize,
    trials_completed: usize,
}

fn view(id: Uuid, e: &Entry) -> SessionView {
    SessionView {
        id: id.to_string(),
        layout: e.layout.clone(),
        noise: e.noise,
        phase: e.session.phase().to_string(),
        presented: e.session.presented().to_string(),
        committed: e.session.committed().to_string(),
        tap_context: e.session.tap_context().len(),
        trials_completed: e.session.completed().len(),
    }
}

async fn open_session(State(state): State<SharedState>, body: Bytes) -> Result<Response, ApiError> {
    let req: OpenRequest = parse_body(&body)?;
    let layout = req.layout.unwrap_or_else(|| state.default_layout.clone());
    let decoder = state
        .decoders
        .get(&layout)
        .cloned()
        .ok_or_else(|| ApiError::bad_request(format!("unknown layout `{layout}`")))?;
    let noise = req.noise.unwrap_or(state.noise);
    noise.check()?;
    let seed = req.seed.unwrap_or(state.seed);
    let id = Uuid::new_v4();
    let template = TrialHeader {
        layout: layout.clone(),
        condition: "interactive".into(),
        group: layout.clone(),
        block: 1,
        seed,
        ..TrialHeader::default()
    };
    let entry = Entry {
        session: Session::new(decoder, template),
        schedule: PhraseSchedule::new(state.phrases.len(), seed, true),
        layout,
        noise,
    };
    let body = view(id, &entry);
    state.sessions.lock().expect("session map lock").insert(id, Arc::new(tokio::sync::Mutex::new(entry)));
    log::info!("opened session {id}");
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<SharedState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let (uuid, entry) = state.entry(&id)?;
    let e = entry.lock().await;
    Ok(Json(view(uuid, &e)))
}

async fn close_session(State(state): State<SharedState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let (uuid, entry) = state.entry(&id)?;
    let e = entry.lock().await;
    state.write_log(uuid, &e).map_err(|err| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: format!("cannot write log: {err}"),
    })?;
    state.sessions.lock().expect("session map lock").remove(&uuid);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShowRequest {
    /// Explicit phrase; the next scheduled one when absent.
    #[serde(default)]
    phrase: Option<String>,
}

async fn show_phrase(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let req: ShowRequest = parse_body(&body)?;
    let (uuid, entry) = state.entry(&id)?;
    let mut guard = entry.lock().await;
    let e = &mut *guard;
    match req.phrase {
        Some(p) if p.trim().is_empty() => return Err(ApiError::bad_request("phrase is empty")),
        Some(p) => e.session.show_phrase(&p),
        None => e.session.next_trial(&mut e.schedule, &state.phrases),
    }
    .map_err(ApiError::from_session)?;
    Ok(Json(view(uuid, e)))
}

async fn post_event(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let action: Action = parse_body(&body)?;
    let (_, entry) = state.entry(&id)?;
    let mut e = entry.lock().await;
    let applied = e.session.apply(action).map_err(ApiError::from_session)?;
    Ok(Json(json!({ "applied": applied, "suggestions": e.session.suggestions() })))
}

async fn get_suggestions(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<thumbkey_core::SuggestionPair>, ApiError> {
    let (_, entry) = state.entry(&id)?;
    let e = entry.lock().await;
    Ok(Json(e.session.suggestions()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitRequest {
    t_down: f64,
    t_up: f64,
}

async fn submit(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req: SubmitRequest = parse_body(&body)?;
    let (_, entry) = state.entry(&id)?;
    let mut e = entry.lock().await;
    e.session
        .apply(Action::Press { label: KeyLabel::Submit, touch: None, t_down: req.t_down, t_up: req.t_up })
        .map_err(ApiError::from_session)?;
    let log = e.session.completed().last().expect("submit completes a trial");
    Ok(Json(json!({ "trial": log.header.trial, "metrics": trial_metrics(log) })))
}

/// A trial's metrics, or the reason they are undefined.
fn trial_metrics(log: &thumbkey_core::TrialLog) -> serde_json::Value {
    match MetricsReport::compute(log) {
        Ok(r) => json!(r),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

async fn fetch_metrics(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let (_, entry) = state.entry(&id)?;
    let e = entry.lock().await;
    let trials: Vec<serde_json::Value> = e
        .session
        .completed()
        .iter()
        .map(|log| json!({ "trial": log.header.trial, "presented": log.presented(), "metrics": trial_metrics(log) }))
        .collect();
    Ok(Json(json!({ "trials": trials })))
}

async fn export_log(State(state): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (_, entry) = state.entry(&id)?;
    let e = entry.lock().await;
    let text = trials_to_jsonl(e.session.completed());
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn get_layout(State(state): State<SharedState>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let decoder = state.decoders.get(&name).ok_or_else(|| ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: format!("no layout `{name}`"),
    })?;
    Ok(([(header::CONTENT_TYPE, "application/json")], decoder.layout().to_json()).into_response())
}
