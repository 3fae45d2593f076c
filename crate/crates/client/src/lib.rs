//! Thin async client for the vdgpt HTTP service.

pub mod api;

use std::time::Duration;

use reqwest::header::{ETAG, IF_MATCH};
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use vdgpt_core::eval::MetricReport;
use vdgpt_core::layout::DenseLayoutDoc;
use vdgpt_core::plan::ValidationReport;

use api::*;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{status}: {} ({})", .error.message, .error.code)]
    Api { status: u16, error: ApiError },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            Self::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    /// The service's error code, or a transport-level one.
    pub fn code(&self) -> &str {
        match self {
            Self::Api { error, .. } => &error.code,
            Self::Transport(_) => "TRANSPORT_ERROR",
            Self::Protocol(_) => "PROTOCOL_ERROR",
        }
    }
}

/// A stored plan as served: exact bytes plus version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanBytes {
    pub bytes: Vec<u8>,
    pub version: u64,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
    poll_interval: Duration,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
            poll_interval: Duration::from_millis(20),
        }
    }

    pub fn with_poll_interval(mut self, d: Duration) -> Self {
        self.poll_interval = d;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self.http.post(self.url(path)).json(body).send().await?;
        decode(resp).await
    }

    pub async fn list_plans(&self) -> Result<Vec<PlanEntry>, ClientError> {
        decode(self.http.get(self.url("/plans")).send().await?).await
    }

    pub async fn get_plan(&self, id: &str) -> Result<PlanBytes, ClientError> {
        let resp = check(self.http.get(self.url(&format!("/plans/{id}"))).send().await?).await?;
        let version = etag_version(&resp)?;
        Ok(PlanBytes {
            bytes: resp.bytes().await?.to_vec(),
            version,
        })
    }

    /// Stores `bytes` under `id`. With `expected_version`, the write only
    /// succeeds if the stored version still matches (0 for a new id).
    pub async fn put_plan(&self, id: &str, bytes: Vec<u8>, expected_version: Option<u64>) -> Result<PlanEntry, ClientError> {
        let mut req = self
            .http
            .put(self.url(&format!("/plans/{id}")))
            .header("content-type", "application/json")
            .body(bytes);
        if let Some(v) = expected_version {
            req = req.header(IF_MATCH, format!("\"{v}\""));
        }
        decode(req.send().await?).await
    }

    pub async fn validate_plan(&self, id: &str) -> Result<ValidationReport, ClientError> {
        let resp = self.http.post(self.url(&format!("/plans/{id}/validate"))).send().await?;
        decode(resp).await
    }

    pub async fn interpolate_plan(&self, id: &str, frames: Option<usize>) -> Result<DenseLayoutDoc, ClientError> {
        self.post(&format!("/plans/{id}/interpolate"), &InterpolateRequest { frames }).await
    }

    pub async fn metrics_preview(&self, id: &str, req: &MetricsPreviewRequest) -> Result<MetricReport, ClientError> {
        self.post(&format!("/plans/{id}/metrics/preview"), req).await
    }

    pub async fn interpolate(&self, req: &InlineInterpolateRequest) -> Result<DenseLayoutDoc, ClientError> {
        self.post("/interpolate", req).await
    }

    pub async fn start_compile(&self, req: &CompileRequest) -> Result<String, ClientError> {
        let created: JobCreated = self.post("/compile", req).await?;
        Ok(created.job_id)
    }

    pub async fn job(&self, id: &str) -> Result<JobView, ClientError> {
        decode(self.http.get(self.url(&format!("/jobs/{id}"))).send().await?).await
    }

    pub async fn cancel_job(&self, id: &str) -> Result<JobView, ClientError> {
        decode(self.http.delete(self.url(&format!("/jobs/{id}"))).send().await?).await
    }

    /// Polls until the job leaves the running state.
    pub async fn wait_job(&self, id: &str) -> Result<JobView, ClientError> {
        loop {
            let view = self.job(id).await?;
            if view.status.is_done() {
                return Ok(view);
            }
            tokio::time::sleep(self.poll_interval).await;
        }
    }

    pub async fn compile(&self, req: &CompileRequest) -> Result<JobView, ClientError> {
        let id = self.start_compile(req).await?;
        self.wait_job(&id).await
    }

    pub async fn sample(&self, req: &SampleRequest) -> Result<SampleResponse, ClientError> {
        self.post("/sample", req).await
    }

    pub async fn train(&self, req: &TrainRequest) -> Result<TrainSummary, ClientError> {
        self.post("/train", req).await
    }

    pub async fn eval(&self, req: &EvalRequest) -> Result<MetricReport, ClientError> {
        self.post("/eval", req).await
    }

    pub async fn dataset(&self, req: &DatasetRequest) -> Result<DatasetResponse, ClientError> {
        self.post("/datasets", req).await
    }
}

async fn check(resp: Response) -> Result<Response, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let bytes = resp.bytes().await?;
    let error = serde_json::from_slice::<ApiError>(&bytes).unwrap_or_else(|_| ApiError {
        code: status_code_name(status).to_string(),
        message: String::from_utf8_lossy(&bytes).into_owned(),
        current_version: None,
    });
    Err(ClientError::Api {
        status: status.as_u16(),
        error,
    })
}

async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    let bytes = check(resp).await?.bytes().await?;
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Protocol(e.to_string()))
}

fn status_code_name(status: StatusCode) -> &'static str {
    match status {
        StatusCode::NOT_FOUND => "NOT_FOUND",
        StatusCode::CONFLICT => "VERSION_CONFLICT",
        StatusCode::BAD_REQUEST => "BAD_REQUEST",
        _ => "HTTP_ERROR",
    }
}

fn etag_version(resp: &Response) -> Result<u64, ClientError> {
    resp.headers()
        .get(ETAG)
        .and_then(|v| v.to_str().ok())
        .and_then(|s| s.trim_matches('"').parse().ok())
        .ok_or_else(|| ClientError::Protocol("missing or malformed ETag".into()))
}
