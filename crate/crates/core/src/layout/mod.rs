//! Dense layout synthesis from keyframes, plus box encodings shared by the
//! grounding path and the evaluation metrics.

mod dense;
mod direction;
mod fourier;
mod interpolate;

use thiserror::Error;

pub use crate::plan::{box_area, box_center};
pub use dense::{densify_plan, to_center_point_layout, DenseEntry, DenseLayout, DenseLayoutDoc, DENSE_SCHEMA};
pub use direction::Direction;
pub use fourier::{fourier_features, FourierFeature, DEFAULT_FOURIER_BANDS};
pub use interpolate::{blend, interpolate_layouts, interpolate_on_grid, Interpolation};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("track {0:?} has no keyframes")]
    EmptyTrack(String),
    #[error("track {0:?} keyframe indices are not strictly increasing")]
    UnorderedKeyframes(String),
    #[error("target of {target} frames is shorter than {keyframes} keyframes")]
    TargetTooShort { target: usize, keyframes: usize },
    #[error("scene {scene}: {source}")]
    InScene {
        scene: u32,
        #[source]
        source: Box<LayoutError>,
    },
}

impl LayoutError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyTrack(_) => "EMPTY_TRACK",
            Self::UnorderedKeyframes(_) => "UNORDERED_KEYFRAMES",
            Self::TargetTooShort { .. } => "TARGET_TOO_SHORT",
            Self::InScene { source, .. } => source.code(),
        }
    }
}
