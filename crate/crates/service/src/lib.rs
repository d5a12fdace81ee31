//! HTTP control plane for live runs.
//!
//! Runs are created from an experiment config, paced in the background, and
//! steered with control commands. Every run keeps an append-only event log
//! that subscribers read as a server-sent event stream.

mod run;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use olcais::ExperimentConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

pub use run::{Control, ControlError, EventBody, ExportFile, Run, RunEvent, RunHandle, RunStatus};

/// Environment variable consulted for the listening port.
pub const PORT_ENV: &str = "OLCAIS_PORT";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Clone, Default)]
pub struct AppState {
    runs: Arc<RwLock<HashMap<String, Arc<Run>>>>,
    counter: Arc<AtomicU64>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run(&self, id: &str) -> Option<Arc<Run>> {
        self.runs.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    /// Registers a run and starts its pacing task unless `start` is false.
    /// Must be called inside a tokio runtime.
    pub fn create(&self, config: ExperimentConfig, start: bool) -> olcais::Result<Arc<Run>> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
        let run = Run::new(format!("run-{n:04}"), config, start)?;
        self.runs
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(run.id().to_string(), run.clone());
        tokio::spawn(run::drive(run.clone()));
        Ok(run)
    }
}

/// JSON error body: `{"error": ..., "field": ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn not_found(id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: format!("no run `{id}`"),
            field: None,
        }
    }

    fn bad_request(message: impl Into<String>, field: Option<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            field,
        }
    }
}

impl From<olcais::Error> for ApiError {
    fn from(e: olcais::Error) -> Self {
        let field = match &e {
            olcais::Error::Config { field, .. } => Some(field.clone()),
            _ => None,
        };
        Self::bad_request(e.to_string(), field)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(field) = self.field {
            body["field"] = json!(field);
        }
        (self.status, Json(body)).into_response()
    }
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<Run>, ApiError> {
    state.run(id).ok_or_else(|| ApiError::not_found(id))
}

#[derive(Debug, Deserialize)]
struct CreateQuery {
    /// `false` keeps the run in `configured` until a `resume` command.
    #[serde(default = "yes")]
    start: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub run_id: String,
}

async fn create_run(State(state): State<AppState>, Query(q): Query<CreateQuery>, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8", None))?;
    let text = if text.trim().is_empty() { "{}" } else { text };
    let config = ExperimentConfig::from_json(text)?;
    let run = state.create(config, q.start)?;
    let location = format!("/runs/{}", run.id());
    let body = Json(Created {
        run_id: run.id().to_string(),
    });
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], body).into_response())
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<RunHandle>, ApiError> {
    Ok(Json(lookup(&state, &id)?.handle()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Acknowledged {
    pub acknowledged_iteration: usize,
}

async fn control_run(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Acknowledged>, ApiError> {
    let run = lookup(&state, &id)?;
    let control: Control = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string(), Some("command".into())))?;
    match run.control(control) {
        Ok(at) => Ok(Json(Acknowledged {
            acknowledged_iteration: at,
        })),
        Err(ControlError::Conflict(message)) => Err(ApiError {
            status: StatusCode::CONFLICT,
            message,
            field: None,
        }),
    }
}

async fn get_metrics(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<olcais::MetricsReport>>, ApiError> {
    Ok(Json(lookup(&state, &id)?.metrics()))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    file: ExportFile,
}

async fn export_csv(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let run = lookup(&state, &id)?;
    let disposition = format!("attachment; filename=\"{}-{}\"", run.id(), q.file.file_name());
    let headers = [(header::CONTENT_TYPE, "text/csv".to_string()), (header::CONTENT_DISPOSITION, disposition)];
    Ok((headers, run.export(q.file)).into_response())
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from: usize,
}

struct Cursor {
    run: Arc<Run>,
    rx: tokio::sync::watch::Receiver<usize>,
    next: usize,
    pending: std::collections::VecDeque<RunEvent>,
    done: bool,
}

fn to_sse(event: &RunEvent) -> Event {
    Event::default()
        .event(event.body.kind())
        .id(event.seq.to_string())
        .data(serde_json::to_string(event).expect("events serialize"))
}

/// Replays the log from the first event at or after `from`, then follows
/// the run live. The stream ends after the final status event.
pub fn event_stream(run: Arc<Run>, from: usize) -> impl Stream<Item = Result<Event, Infallible>> {
    let cursor = Cursor {
        rx: run.subscribe(),
        next: run.first_event_at(from),
        run,
        pending: Default::default(),
        done: false,
    };
    stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(ev) = c.pending.pop_front() {
                c.done = ev.is_last();
                return Some((Ok(to_sse(&ev)), c));
            }
            if c.done {
                return None;
            }
            c.rx.borrow_and_update();
            let fresh = c.run.events_from(c.next);
            if fresh.is_empty() {
                if c.rx.changed().await.is_err() {
                    return None;
                }
                continue;
            }
            c.next += fresh.len();
            c.pending.extend(fresh);
        }
    })
}

async fn stream_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let run = lookup(&state, &id)?;
    Ok(Sse::new(event_stream(run, q.from)).keep_alive(KeepAlive::default()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/events", get(stream_events))
        .route("/runs/{id}/control", post(control_run))
        .route("/runs/{id}/metrics", get(get_metrics))
        .route("/runs/{id}/export.csv", get(export_csv))
        .with_state(state)
}

/// Serves the API on `listener` until Ctrl-C.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(AppState::new()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
