//! HTTP front end for the scheduler: job submission, scoring, fleet inspection and logs.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::cors::CorsLayer;

use qorc_core::device::{registry_load, registry_save, setup_fleet, DeviceError, Fleet, NodeLabels};
use qorc_core::scheduler::{score_job, JobSpec, JournalError, Scheduler, SubmitError, ValidationError};

pub const REGISTRY_FILE: &str = "registry.json";
pub const JOURNAL_FILE: &str = "jobs.jsonl";

/// Error body carried by every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
    #[serde(skip)]
    pub status: u16,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        ApiError { code: code.into(), message: message.into(), detail, status: status.as_u16() }
    }

    fn not_found(code: &str, what: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, code, format!("{what} not found"), json!({ "id": what }))
    }
}

impl From<ValidationError> for ApiError {
    fn from(e: ValidationError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "ValidationError", e.to_string(), json!({ "path": e.path }))
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Validation(v) => v.into(),
            SubmitError::QueueFull => ApiError::new(StatusCode::TOO_MANY_REQUESTS, "QueueFull", e.to_string(), Value::Null),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Registry(#[from] DeviceError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("cannot create data directory {path}: {source}")]
    DataDir { path: PathBuf, source: std::io::Error },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct Config {
    pub data_dir: PathBuf,
    /// Registry to import; otherwise the data directory's registry, else a generated fleet.
    pub fleet: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Clone)]
pub struct AppState {
    pub scheduler: Arc<Scheduler>,
}

impl AppState {
    pub fn new(scheduler: Scheduler) -> Self {
        AppState { scheduler: Arc::new(scheduler) }
    }

    /// Loads the fleet and replays the job journal from `cfg.data_dir`.
    pub fn open(cfg: &Config) -> Result<Self, StartError> {
        std::fs::create_dir_all(&cfg.data_dir)
            .map_err(|source| StartError::DataDir { path: cfg.data_dir.clone(), source })?;
        let fleet = load_fleet(cfg)?;
        let scheduler = Scheduler::start(fleet, Some(&cfg.data_dir.join(JOURNAL_FILE)))?;
        Ok(AppState::new(scheduler))
    }
}

fn load_fleet(cfg: &Config) -> Result<Fleet, DeviceError> {
    let stored = cfg.data_dir.join(REGISTRY_FILE);
    let fleet = match &cfg.fleet {
        Some(path) => registry_load(path)?,
        None if stored.exists() => return registry_load(&stored),
        None => setup_fleet(cfg.seed),
    };
    registry_save(&fleet, &stored)?;
    Ok(fleet)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/jobs", post(submit_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/logs", get(get_logs))
        .route("/score", post(score))
        .route("/score-prep", post(score_prep))
        .route("/nodes", get(nodes))
        .route("/cluster", get(cluster))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route", Value::Null) })
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(cfg: Config, addr: SocketAddr) -> Result<(), StartError> {
    let state = tokio::task::spawn_blocking(move || AppState::open(&cfg)).await.expect("startup task")?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| StartError::Bind { addr, source })?;
    tracing::info!("listening on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| StartError::Bind { addr, source })
}

fn parse_spec(body: &str) -> Result<JobSpec, ApiError> {
    Ok(JobSpec::from_json(body)?)
}

async fn submit_job(State(st): State<AppState>, body: String) -> Result<Response, ApiError> {
    let spec = parse_spec(&body)?;
    let id = st.scheduler.submit(spec)?;
    let location = HeaderValue::from_str(&format!("/jobs/{id}")).expect("ids are ascii");
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], Json(json!({ "job_id": id }))).into_response())
}

async fn get_job(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let record = st.scheduler.get(&id).ok_or_else(|| ApiError::not_found("UnknownJob", &id))?;
    Ok(Json(record).into_response())
}

async fn get_logs(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let record = st.scheduler.get(&id).ok_or_else(|| ApiError::not_found("UnknownJob", &id))?;
    if !record.logs_ready() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "LogsNotReady",
            format!("job {id} is {:?}; logs are available once it finishes", record.state),
            json!({ "state": record.state }),
        ));
    }
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], record.logs).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRequest {
    job_name: String,
    backend_id: String,
}

async fn score(State(st): State<AppState>, body: String) -> Result<Response, ApiError> {
    let req: ScoreRequest = serde_json::from_str(&body).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "ValidationError", e.to_string(), json!({ "path": "" }))
    })?;
    let job = st.scheduler.job_by_name(&req.job_name).ok_or_else(|| ApiError::not_found("UnknownJob", &req.job_name))?;
    let backend = st
        .scheduler
        .fleet()
        .get(&req.backend_id)
        .map(|n| n.backend.clone())
        .ok_or_else(|| ApiError::not_found("UnknownBackend", &req.backend_id))?;
    let result = tokio::task::spawn_blocking(move || score_job(&job, &backend)).await.expect("scoring task");
    match result {
        Ok(s) => Ok(Json(s).into_response()),
        Err(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ScoringFailed", e, Value::Null)),
    }
}

async fn score_prep(State(st): State<AppState>, body: String) -> Result<Response, ApiError> {
    let job = st.scheduler.register(parse_spec(&body)?)?;
    Ok(Json(json!({ "job_name": job.spec.name })).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: String,
    pub labels: NodeLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub nodes: usize,
    pub queue_depth: usize,
    pub running: Option<String>,
}

async fn nodes(State(st): State<AppState>) -> Json<Vec<NodeView>> {
    Json(st.scheduler.fleet().iter().map(|n| NodeView { id: n.id().to_string(), labels: n.labels() }).collect())
}

async fn cluster(State(st): State<AppState>) -> Json<ClusterView> {
    Json(ClusterView {
        nodes: st.scheduler.fleet().len(),
        queue_depth: st.scheduler.queue_depth(),
        running: st.scheduler.running(),
    })
}

/// Opens a service state over an explicit fleet, for embedding and tests.
pub fn state_with_fleet(fleet: Fleet, data_dir: Option<&Path>) -> Result<AppState, StartError> {
    let journal = data_dir.map(|d| d.join(JOURNAL_FILE));
    Ok(AppState::new(Scheduler::start(fleet, journal.as_deref())?))
}
