//! Local HTTP service.
//!
//! Build, check and net answer synchronously; flex and search run as jobs on
//! the blocking pool and are polled through `/jobs/{id}`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;

use crate::ops::{self, ErrorKind, OpError, OpResult};

pub const PORT_ENV: &str = "TWINFLEX_PORT";
pub const DEFAULT_PORT: u16 = 7878;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: &'static str,
    pub request: serde_json::Value,
    pub status: JobStatus,
    /// Where the result can be fetched once `done`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<OpError>,
    #[serde(skip)]
    payload: Option<String>,
}

type JobSlot = Arc<RwLock<JobRecord>>;

#[derive(Clone, Default)]
pub struct AppState {
    jobs: Arc<RwLock<HashMap<String, JobSlot>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    fn insert(&self, kind: &'static str, request: serde_json::Value) -> (String, JobSlot) {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = format!("job-{n}");
        let slot = Arc::new(RwLock::new(JobRecord {
            id: id.clone(),
            kind,
            request,
            status: JobStatus::Pending,
            result: None,
            error: None,
            payload: None,
        }));
        self.jobs.write().expect("job store poisoned").insert(id.clone(), slot.clone());
        (id, slot)
    }

    fn get(&self, id: &str) -> Option<JobSlot> {
        self.jobs.read().expect("job store poisoned").get(id).cloned()
    }
}

struct ApiError(OpError);

impl From<OpError> for ApiError {
    fn from(e: OpError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::Validation => StatusCode::BAD_REQUEST,
            ErrorKind::Solver => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
        };
        json_response(status, self.0.to_json())
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

type ApiResult = Result<Response, ApiError>;

pub fn router() -> Router {
    router_with(AppState::default())
}

pub fn router_with(state: AppState) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/build", post(build))
        .route("/flex", post(flex))
        .route("/search", post(search))
        .route("/check", post(check))
        .route("/net", post(net))
        .route("/jobs/{id}", get(job_status))
        .route("/jobs/{id}/frames", get(job_frames))
        .route("/jobs/{id}/result", get(job_result))
        .with_state(state)
}

async fn list_models() -> ApiResult {
    Ok(json_response(StatusCode::OK, ops::payload(&ops::models())?))
}

async fn build(body: Bytes) -> ApiResult {
    let req: ops::BuildRequest = ops::parse_request(&body)?;
    let doc = tokio::task::spawn_blocking(move || ops::build(&req)).await.map_err(join_error)??;
    Ok(json_response(StatusCode::OK, ops::payload(&doc)?))
}

async fn check(body: Bytes) -> ApiResult {
    let req: ops::CheckRequest = ops::parse_request(&body)?;
    let out = tokio::task::spawn_blocking(move || ops::check(&req)).await.map_err(join_error)??;
    Ok(json_response(StatusCode::OK, ops::payload(&out)?))
}

async fn net(body: Bytes) -> ApiResult {
    let req: ops::NetRequest = ops::parse_request(&body)?;
    let (_, svg) = tokio::task::spawn_blocking(move || ops::net(&req)).await.map_err(join_error)??;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

fn join_error(e: tokio::task::JoinError) -> OpError {
    OpError {
        kind: ErrorKind::Solver,
        code: "internal".into(),
        message: e.to_string(),
    }
}

/// Registers a job and runs `work` on the blocking pool.
fn spawn_job<F>(state: &AppState, kind: &'static str, request: serde_json::Value, work: F) -> Response
where
    F: FnOnce() -> OpResult<String> + Send + 'static,
{
    let (id, slot) = state.insert(kind, request);
    let locator = match kind {
        "flex" => format!("/jobs/{id}/frames"),
        _ => format!("/jobs/{id}/result"),
    };
    tokio::task::spawn_blocking(move || {
        slot.write().expect("job poisoned").status = JobStatus::Running;
        let outcome = work();
        let mut rec = slot.write().expect("job poisoned");
        match outcome {
            Ok(p) => {
                rec.payload = Some(p);
                rec.result = Some(locator);
                rec.status = JobStatus::Done;
            }
            Err(e) => {
                rec.error = Some(e);
                rec.status = JobStatus::Failed;
            }
        }
    });
    let body = serde_json::json!({ "id": id, "status": JobStatus::Pending }).to_string();
    json_response(StatusCode::ACCEPTED, body)
}

async fn flex(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: ops::FlexRequest = ops::parse_request(&body)?;
    let job = ops::prepare_flex(&req)?;
    let echo = serde_json::json!({ "driver": req.driver, "range": req.range, "frames": req.frames });
    Ok(spawn_job(&state, "flex", echo, move || ops::payload(&job.run()?)))
}

async fn search(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: ops::SearchRequest = ops::parse_request(&body)?;
    twinflex_core::twinning::catalog::spec_of(&req.model).map_err(OpError::from)?;
    let echo = serde_json::to_value(&req).map_err(OpError::from)?;
    Ok(spawn_job(&state, "search", echo, move || ops::payload(&ops::search(&req)?)))
}

fn lookup(state: &AppState, id: &str) -> Result<JobSlot, ApiError> {
    state
        .get(id)
        .ok_or_else(|| ApiError(OpError::not_found("unknown_job", format!("no job `{id}`"))))
}

async fn job_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let slot = lookup(&state, &id)?;
    let rec = slot.read().expect("job poisoned").clone();
    Ok(json_response(StatusCode::OK, ops::payload(&rec)?))
}

fn job_payload(state: &AppState, id: &str, want: Option<&str>) -> ApiResult {
    let slot = lookup(state, id)?;
    let rec = slot.read().expect("job poisoned");
    if want.is_some_and(|k| k != rec.kind) {
        return Err(ApiError(OpError::not_found(
            "no_frames",
            format!("job `{id}` is a {} job", rec.kind),
        )));
    }
    match (rec.status, &rec.payload, &rec.error) {
        (JobStatus::Done, Some(p), _) => Ok(json_response(StatusCode::OK, p.clone())),
        (JobStatus::Failed, _, Some(e)) => Err(ApiError(e.clone())),
        _ => {
            let body = OpError {
                kind: ErrorKind::Validation,
                code: "not_ready".into(),
                message: format!("job `{id}` is {:?}", rec.status).to_lowercase(),
            };
            Ok(json_response(StatusCode::CONFLICT, body.to_json()))
        }
    }
}

async fn job_frames(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    job_payload(&state, &id, Some("flex"))
}

async fn job_result(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    job_payload(&state, &id, None)
}

/// Port from the environment if set, else `fallback`.
pub fn port_from_env(fallback: u16) -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(fallback)
}

pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router()).await
}
