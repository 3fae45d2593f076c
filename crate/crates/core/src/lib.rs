//! Planning, layout and evaluation core.
//!
//! * [`plan`]: plan documents and validation
//! * [`planner`]: two-step LLM prompting, response parsing and plan assembly
//! * [`layout`]: keyframe interpolation and box geometry
//! * [`eval`]: movement, consistency and layout-skill metrics
//! * [`datasets`]: evaluation prompt-set generators

pub mod datasets;
pub mod eval;
pub mod layout;
pub mod plan;
pub mod planner;

pub use plan::{BoundingBox, VideoPlan};
