//! Video-plan data model, the `vdgpt-plan/1` document format, and the
//! structural checks every plan has to pass before it is rendered.
//!
//! A plan holds one [`SceneSpec`] per scene. Each scene lists its entities as
//! [`EntityTrack`]s whose keyframe boxes live on a small keyframe grid (9
//! frames by default); the layout engine expands them to the dense frame
//! count. [`ConsistencyGroups`] record which scenes share an entity or
//! background so that downstream generation can reuse one representation.

mod bbox;
mod codec;
mod model;
mod validate;

use thiserror::Error;

pub use bbox::{box_area, box_center, on_grid, quantize_box, BoundingBox, GRID_UNIT};
pub use codec::{deserialize_plan, from_json_with_path, serialize_plan, to_canonical_json};
pub use model::{
    guided_step_count, AlphaMode, AlphaSetting, ConsistencyGroups, EntityTrack, Keyframe,
    Provenance, ProvenanceEntry, SceneSpec, VideoPlan, DEFAULT_ALPHA, DEFAULT_NUM_KEYFRAMES,
    DEFAULT_TARGET_FRAMES, DYNAMIC_ALPHA_MAX, PLAN_SCHEMA,
};
pub use validate::{validate_plan, ValidationReport, Violation, ViolationCode};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("non-finite coordinate in {0:?}")]
    InvalidCoordinate([f64; 4]),
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidCoordinate(_) => "INVALID_COORDINATE",
            Self::Parse { .. } => "PARSE_ERROR",
        }
    }
}
