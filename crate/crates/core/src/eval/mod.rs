//! Movement-direction accuracy, cross-scene object consistency and
//! layout-level VPEval skill checks over pluggable detectors.

mod consistency;
mod detection;
mod movement;
mod report;
mod suite;
mod vpeval;

use thiserror::Error;

pub use consistency::{cosine, object_consistency, ConsistencyDenominator};
pub(crate) use detection::read_jsonl;
pub use detection::{
    layout_oracle_detector, read_detection_file, write_detection_file, Detection, DetectionRecord,
    DetectorProvider, FrameRef, LayoutOracleDetector, RecordedDetections,
};
pub use movement::{
    movement_direction_score, movement_for_plan, pick_detection, random_direction_baseline, score_movement,
    MovementScore,
};
pub use report::{aggregate, render_table, MetricItem, MetricReport, MetricSummary};
pub use suite::{evaluate_prompts, read_embedding_file, EmbeddingRecord, EvalSettings, EvalSources};
pub use vpeval::{
    plan_boxes, vpeval_count, vpeval_object, vpeval_scale, vpeval_spatial, LabeledBox, PredicateResult,
    ScaleRelation, ScaleThresholds, SpatialRelation, VpevalQuery,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 scene embeddings, got {0}")]
    InsufficientScenes(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}")]
    Io(String),
    #[error("bad input: {0}")]
    Format(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InsufficientScenes(_) => "INSUFFICIENT_SCENES",
            Self::Shape(_) => "SHAPE_ERROR",
            Self::Io(_) => "IO_ERROR",
            Self::Format(_) => "PARSE_ERROR",
        }
    }
}
