//! HTTP/JSON service over plan storage, validation, interpolation, metric
//! previews, compilation jobs, desk-scale sampling and prompt-set generation.
//!
//! Plans are stored byte for byte as PUT and versioned per id; a PUT with a
//! stale `If-Match` version is rejected with 409. Every other endpoint only
//! reads.

mod compute;
mod error;
mod jobs;
mod store;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::header::{CONTENT_TYPE, ETAG, IF_MATCH};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use vdgpt_client::api::*;
use vdgpt_core::eval::MetricReport;
use vdgpt_core::layout::{densify_plan, DenseLayoutDoc};
use vdgpt_core::plan::{deserialize_plan, from_json_with_path, validate_plan, ValidationReport};
use vdgpt_core::VideoPlan;

pub use error::HttpError;
pub use jobs::{make_backend, JobRegistry};
pub use store::{valid_id, PlanStore, PutOutcome};

pub struct AppState {
    pub store: PlanStore,
    pub jobs: Arc<JobRegistry>,
}

impl AppState {
    pub async fn open(store_dir: &Path) -> std::io::Result<Arc<Self>> {
        Ok(Arc::new(Self {
            store: PlanStore::open(store_dir).await?,
            jobs: Arc::new(JobRegistry::default()),
        }))
    }
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/plans", get(list_plans))
        .route("/plans/{id}", get(get_plan).put(put_plan))
        .route("/plans/{id}/validate", post(validate_stored))
        .route("/plans/{id}/interpolate", post(interpolate_stored))
        .route("/plans/{id}/metrics/preview", post(metrics_preview))
        .route("/compile", post(start_compile))
        .route("/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/interpolate", post(interpolate_inline))
        .route("/sample", post(sample))
        .route("/train", post(train))
        .route("/eval", post(eval))
        .route("/datasets", post(dataset))
        .with_state(state)
}

/// Binds `addr` and serves in the background. Returns the bound address,
/// which differs from `addr` when its port is 0.
pub async fn spawn(addr: SocketAddr, store_dir: &Path) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let state = AppState::open(store_dir).await?;
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(state)).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((local, handle))
}

fn check_id(id: &str) -> Result<(), HttpError> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(HttpError::bad_request("INVALID_ID", format!("invalid plan id {id:?}")))
    }
}

/// JSON body parsed with field paths in the error message.
fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, HttpError> {
    if body.is_empty() {
        return from_json_with_path(b"{}").map_err(HttpError::from);
    }
    from_json_with_path(body).map_err(HttpError::from)
}

async fn load_plan(state: &AppState, id: &str) -> Result<VideoPlan, HttpError> {
    check_id(id)?;
    let (bytes, _) = state.store.get(id).await?.ok_or_else(|| HttpError::not_found("plan", id))?;
    deserialize_plan(&bytes).map_err(|e| HttpError::internal(format!("stored plan unreadable: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, HttpError> + Send + 'static) -> Result<T, HttpError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| HttpError::internal(e.to_string()))?
}

fn etag(version: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{version}\"")).expect("digits are a valid header value")
}

fn parse_if_match(headers: &HeaderMap) -> Result<Option<u64>, HttpError> {
    let Some(v) = headers.get(IF_MATCH) else {
        return Ok(None);
    };
    v.to_str()
        .ok()
        .map(|s| s.trim().trim_start_matches("W/").trim_matches('"'))
        .and_then(|s| s.parse().ok())
        .map(Some)
        .ok_or_else(|| HttpError::bad_request("BAD_IF_MATCH", "If-Match must be a quoted version number"))
}

async fn list_plans(State(state): Shared) -> Json<Vec<PlanEntry>> {
    Json(state.store.list().await)
}

async fn get_plan(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Response, HttpError> {
    check_id(&id)?;
    let (bytes, version) = state.store.get(&id).await?.ok_or_else(|| HttpError::not_found("plan", &id))?;
    let mut resp = bytes.into_response();
    resp.headers_mut()
        .insert(CONTENT_TYPE, HeaderValue::from_static("application/json"));
    resp.headers_mut().insert(ETAG, etag(version));
    Ok(resp)
}

async fn put_plan(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, HttpError> {
    check_id(&id)?;
    let expected = parse_if_match(&headers)?;
    deserialize_plan(&body)?;
    match state.store.put(&id, &body, expected).await? {
        PutOutcome::Conflict { current } => Err(HttpError::conflict(current)),
        PutOutcome::Stored(entry) => {
            let status = if entry.version == 1 { StatusCode::CREATED } else { StatusCode::OK };
            let tag = etag(entry.version);
            let mut resp = (status, Json(entry)).into_response();
            resp.headers_mut().insert(ETAG, tag);
            Ok(resp)
        }
    }
}

async fn validate_stored(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<ValidationReport>, HttpError> {
    let plan = load_plan(&state, &id).await?;
    Ok(Json(validate_plan(&plan)))
}

async fn interpolate_stored(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<DenseLayoutDoc>, HttpError> {
    let req: InterpolateRequest = parse_body(&body)?;
    let plan = load_plan(&state, &id).await?;
    Ok(Json(densify_plan(&plan, req.frames)?))
}

async fn metrics_preview(
    State(state): Shared,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<MetricReport>, HttpError> {
    let req: MetricsPreviewRequest = parse_body(&body)?;
    let plan = load_plan(&state, &id).await?;
    Ok(Json(compute::metrics_preview(&id, &plan, &req)))
}

async fn start_compile(State(state): Shared, body: Bytes) -> Result<(StatusCode, Json<JobCreated>), HttpError> {
    let req: CompileRequest = parse_body(&body)?;
    let job_id = state.jobs.start_compile(req);
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id })))
}

async fn get_job(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<JobView>, HttpError> {
    state.jobs.get(&id).map(Json).ok_or_else(|| HttpError::not_found("job", &id))
}

async fn cancel_job(State(state): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<JobView>, HttpError> {
    state.jobs.cancel(&id).map(Json).ok_or_else(|| HttpError::not_found("job", &id))
}

async fn interpolate_inline(body: Bytes) -> Result<Json<DenseLayoutDoc>, HttpError> {
    let req: InlineInterpolateRequest = parse_body(&body)?;
    Ok(Json(densify_plan(&req.plan, req.frames)?))
}

async fn sample(body: Bytes) -> Result<Json<SampleResponse>, HttpError> {
    let req: SampleRequest = parse_body(&body)?;
    blocking(move || compute::sample(&req)).await.map(Json)
}

async fn train(body: Bytes) -> Result<Json<TrainSummary>, HttpError> {
    let req: TrainRequest = parse_body(&body)?;
    blocking(move || compute::train(&req)).await.map(Json)
}

async fn eval(body: Bytes) -> Result<Json<MetricReport>, HttpError> {
    let req: EvalRequest = parse_body(&body)?;
    blocking(move || Ok(compute::eval(&req))).await.map(Json)
}

async fn dataset(body: Bytes) -> Result<Json<DatasetResponse>, HttpError> {
    let req: DatasetRequest = parse_body(&body)?;
    Ok(Json(compute::dataset(&req)?))
}
