//! Request and response bodies shared by the service and its clients.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vdgpt_core::datasets::PromptRecord;
use vdgpt_core::eval::{DetectionRecord, EmbeddingRecord, EvalSettings, VpevalQuery};
use vdgpt_core::layout::Direction;
use vdgpt_core::planner::{AlphaRequest, CompileReport};
use vdgpt_core::VideoPlan;
pub use vdgpt_grounding::SamplerKind;

/// Error body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: String,
    pub version: u64,
    /// SHA-256 of the stored bytes, hex.
    pub digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterpolateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineInterpolateRequest {
    pub plan: VideoPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
}

/// Metric preview with the stored plan as layout oracle. Without a
/// direction, one is read from the plan's source prompt; without a target,
/// every entity is scored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsPreviewRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vpeval: Option<VpevalQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub settings: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// The bundled rule-based mock, optionally corrupting replies whose
    /// prompt contains one of the patterns.
    Mock {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        corrupt_step1: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        corrupt_step2: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha_reply: Option<String>,
    },
    /// Recorded responses, read by the service process.
    Replay { path: PathBuf },
    /// OpenAI-style chat completions; the key is read from the service's
    /// environment.
    Http { base_url: String, model: String },
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self::Mock {
            corrupt_step1: Vec::new(),
            corrupt_step2: Vec::new(),
            alpha_reply: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaRequest>,
    #[serde(default)]
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_done(self) -> bool {
        self != Self::Running
    }
}

/// A compile result. A plan that compiled but failed to parse or validate
/// still comes back, with `report.valid == false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileOutcome {
    pub plan: VideoPlan,
    pub report: CompileReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<CompileOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

fn default_scene() -> u32 {
    1
}

fn default_steps() -> usize {
    50
}

fn default_alpha() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub plan: VideoPlan,
    #[serde(default = "default_scene")]
    pub scene: u32,
    /// Checkpoint path readable by the service; a freshly initialized model
    /// from `model_seed` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub model_seed: u64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default = "default_true")]
    pub grounding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub steps: usize,
    pub alpha: f64,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub scene: u32,
    pub guided_steps: usize,
    pub model_calls: usize,
    /// Per reverse step in execution order, starting at t = steps.
    pub guided: Vec<bool>,
}

/// Row-major latent values with shape `(frames, channels, height, width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDump {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub trace: SampleTrace,
    pub latent: LatentDump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Where the service writes the trained checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub trainable_params: usize,
    pub total_params: usize,
    pub frozen_unchanged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub records: Vec<PromptRecord>,
    /// Layout-oracle plans by prompt id.
    #[serde(default)]
    pub plans: BTreeMap<String, VideoPlan>,
    #[serde(default)]
    pub detections: Vec<DetectionRecord>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingRecord>,
    #[serde(default)]
    pub settings: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetRequest {
    /// Direction variants of the given captions, or of the bundled seeds.
    Direction {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seeds: Option<Vec<String>>,
    },
    Coref,
    Hirest { prompt: String, n_scenes: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResponse {
    pub records: Vec<PromptRecord>,
    pub diagnostics: Vec<String>,
}
