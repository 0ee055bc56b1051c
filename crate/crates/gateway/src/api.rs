//! REST and event-stream endpoints.
//!
//! Reads are served from the latest published snapshot. Remedy submissions
//! go to the engine thread and are answered once validation completes.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{oneshot, watch};

use vsa_core::handling::{Submission, SubmissionOutcome};
use vsa_core::remedy::{lint_remedy, parse_remedy_document, Anchor, Verb};
use vsa_core::task::ValueMap;
use vsa_core::validator::ValidationReport;
use vsa_core::{Situation, SituationStatus, Task};

use crate::hub::{Command, Hub, Progress};

/// Error body shared by every endpoint.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub path: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into(), path: None }
    }

    fn at(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} `{id}`"))
    }

    fn bad_query(param: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", message).at(param)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

/// HTTP status for a remedy error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "target_executed" | "not_escalated" | "not_interactive" => StatusCode::CONFLICT,
        _ => StatusCode::BAD_REQUEST,
    }
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/api/plan", get(plan))
        .route("/api/state", get(state))
        .route("/api/situations", get(situations))
        .route("/api/situations/{id}", get(situation))
        .route("/api/situations/{id}/remedy", post(submit_remedy))
        .route("/api/library/situations", get(library_situations))
        .route("/api/palette", get(palette))
        .route("/api/events", get(events))
        .with_state(hub)
}

/// Binds the listening socket; fails when the address is taken.
pub async fn bind(addr: &str) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

pub async fn serve(
    listener: TcpListener,
    hub: Arc<Hub>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(hub)).with_graceful_shutdown(shutdown).await
}

pub fn local_addr(listener: &TcpListener) -> std::io::Result<SocketAddr> {
    listener.local_addr()
}

async fn plan(State(hub): State<Arc<Hub>>) -> Json<Value> {
    let snap = hub.snapshot();
    Json(json!({"seq": snap.seq, "plan": snap.plan}))
}

async fn state(State(hub): State<Arc<Hub>>) -> Json<Value> {
    let snap = hub.snapshot();
    Json(json!({"seq": snap.seq, "state": snap.state}))
}

fn parse_status(text: &str) -> Result<SituationStatus, ApiError> {
    serde_json::from_value(Value::String(text.to_owned()))
        .map_err(|_| ApiError::bad_query("status", format!("unknown situation status `{text}`")))
}

async fn situations(
    State(hub): State<Arc<Hub>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Vec<Situation>>, ApiError> {
    let wanted = q.get("status").map(|s| parse_status(s)).transpose()?;
    let snap = hub.snapshot();
    let list = snap.situations.iter().filter(|s| wanted.is_none_or(|w| s.status == w)).cloned().collect();
    Ok(Json(list))
}

#[derive(Serialize)]
struct SituationDetail {
    situation: Situation,
    /// Task the situation was raised against, with its specs.
    executing: Option<Task>,
    awaiting_remedy: bool,
    attempt: Option<usize>,
    last_validation: Option<ValidationReport>,
}

async fn situation(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Result<Json<SituationDetail>, ApiError> {
    let snap = hub.snapshot();
    let situation = snap.situations.iter().find(|s| s.id == id).cloned().ok_or_else(|| ApiError::not_found("situation", &id))?;
    let pending = hub.escalation().filter(|p| p.situation.id == id);
    let executing = situation.task.as_deref().and_then(|t| snap.plan.find(t)).cloned();
    Ok(Json(SituationDetail {
        executing,
        awaiting_remedy: pending.is_some(),
        attempt: pending.as_ref().map(|p| p.attempt),
        last_validation: pending.and_then(|p| p.last_validation).or_else(|| snap.last_validation.clone()),
        situation,
    }))
}

#[derive(Serialize)]
struct SubmitResponse {
    committed: bool,
    report: ValidationReport,
}

async fn submit_remedy(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SubmitResponse>, ApiError> {
    let snap = hub.snapshot();
    let situation = snap.situations.iter().find(|s| s.id == id).ok_or_else(|| ApiError::not_found("situation", &id))?;

    let doc: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))?;
    let remedy = parse_remedy_document(&doc)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "schema_violation", e.message).at(e.path))?;
    if let Some(issue) = lint_remedy(&remedy).into_iter().next() {
        let field = if issue.code == "parse_error" { "/operation" } else { "" };
        return Err(ApiError::new(status_for(&issue.code), &issue.code, issue.message).at(format!("/{}{field}", issue.index)));
    }

    if situation.status != SituationStatus::Escalated {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "not_escalated",
            format!("situation `{id}` is {}", situation.status.as_str()),
        ));
    }
    let Some(commands) = hub.command_sender() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "not_interactive", "this run does not accept remedies"));
    };
    let (reply, answer) = oneshot::channel();
    let submission = Submission { situation_id: id.clone(), remedy, waited: 0 };
    let gone = || ApiError::new(StatusCode::CONFLICT, "not_escalated", format!("situation `{id}` is no longer awaiting a remedy"));
    commands.send(Command::Submit { submission, reply }).map_err(|_| gone())?;
    match answer.await.map_err(|_| gone())? {
        SubmissionOutcome::Committed { report } => Ok(Json(SubmitResponse { committed: true, report })),
        SubmissionOutcome::ValidationFailed { report } => Ok(Json(SubmitResponse { committed: false, report })),
        SubmissionOutcome::Rejected { code, error, index } => Err(ApiError::new(status_for(&code), &code, error).at(format!("/{index}"))),
        SubmissionOutcome::WrongSituation { expected } => Err(ApiError::new(
            StatusCode::CONFLICT,
            "not_escalated",
            format!("the engine is waiting on `{expected}`"),
        )),
    }
}

#[derive(Serialize)]
struct LibraryMatch {
    case_id: String,
    name: String,
    score: f64,
    situation: Option<Situation>,
}

/// Context to score cases against: an explicit situation, else the latest
/// situation of the requested name in the snapshot.
fn query_context(hub: &Hub, q: &HashMap<String, String>) -> Result<ValueMap, ApiError> {
    let snap = hub.snapshot();
    if let Some(id) = q.get("situation") {
        return snap
            .situations
            .iter()
            .find(|s| &s.id == id)
            .map(|s| s.context.clone())
            .ok_or_else(|| ApiError::not_found("situation", id));
    }
    let name = q.get("name");
    Ok(snap
        .situations
        .iter()
        .rev()
        .find(|s| name.is_some_and(|n| &s.name == n))
        .map(|s| s.context.clone())
        .unwrap_or_default())
}

async fn library_situations(
    State(hub): State<Arc<Hub>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<Vec<LibraryMatch>>, ApiError> {
    let min_score = match q.get("min_score") {
        None => 0.0,
        Some(s) => s
            .parse::<f64>()
            .ok()
            .filter(|v| (0.0..=1.0).contains(v))
            .ok_or_else(|| ApiError::bad_query("min_score", format!("`{s}` is not a score in [0, 1]")))?,
    };
    let context = query_context(&hub, &q)?;
    let matches = hub
        .library()
        .query_situations(q.get("name").map(String::as_str), &context, min_score)
        .into_iter()
        .map(|(record, score)| LibraryMatch {
            case_id: record.id.clone(),
            name: record.name.clone(),
            score: score.value,
            situation: record.situation(),
        })
        .collect();
    Ok(Json(matches))
}

async fn palette(State(hub): State<Arc<Hub>>) -> Json<Value> {
    let verbs: Vec<Value> = Verb::ALL
        .into_iter()
        .map(|v| {
            let anchors: Vec<&str> = Anchor::ALL.into_iter().filter(|a| v.allows(*a)).map(Anchor::as_str).collect();
            json!({"verb": v.as_str(), "anchors": anchors, "default_anchor": v.default_anchor().as_str()})
        })
        .collect();
    Json(json!({
        "templates": hub.library().templates(),
        "verbs": verbs,
        "selectors": ["executing task", "situation context", "situation", "task:<name>", "task:<name>@next", "task:<name>@prev", "new_task:<index>"],
    }))
}

struct StreamState {
    hub: Arc<Hub>,
    progress: watch::Receiver<Progress>,
    cursor: usize,
    snapshot_seq: Option<u64>,
    pending: VecDeque<Event>,
    done: bool,
}

fn json_event(kind: &str, data: &impl Serialize) -> Event {
    Event::default().event(kind).json_data(data).expect("event data serializes")
}

/// Resume point from `Last-Event-ID` or `?since=`.
fn resume_from(headers: &HeaderMap, q: &HashMap<String, String>) -> Result<usize, ApiError> {
    let raw = headers.get("last-event-id").and_then(|v| v.to_str().ok()).or(q.get("since").map(String::as_str));
    raw.map_or(Ok(0), |s| s.trim().parse::<usize>().map_err(|_| ApiError::bad_query("since", format!("`{s}` is not an event seq"))))
}

/// Execution events in seq order, snapshot seq markers, then `done` when the
/// run has finished and every event was sent.
async fn events(
    State(hub): State<Arc<Hub>>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let cursor = resume_from(&headers, &q)?;
    let progress = hub.subscribe();
    let start = StreamState { hub, progress, cursor, snapshot_seq: None, pending: VecDeque::new(), done: false };
    let stream = stream::unfold(start, |mut st| async move {
        loop {
            if let Some(event) = st.pending.pop_front() {
                return Some((Ok(event), st));
            }
            if st.done {
                return None;
            }
            let progress = *st.progress.borrow_and_update();
            for e in st.hub.events_from(st.cursor) {
                st.cursor += 1;
                st.pending.push_back(json_event("execution", &e).id(e.seq.to_string()));
            }
            if st.snapshot_seq != Some(progress.snapshot_seq) {
                st.snapshot_seq = Some(progress.snapshot_seq);
                st.pending.push_back(json_event("snapshot", &json!({"seq": progress.snapshot_seq})));
            }
            if let Some(status) = progress.finished {
                if st.cursor >= progress.events {
                    st.pending.push_back(json_event("done", &json!({"status": status, "events": st.cursor})));
                    st.done = true;
                }
            }
            if st.pending.is_empty() && st.progress.changed().await.is_err() {
                st.done = true;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
