//! Two-step LLM planning: prompt rendering, backend calls, tolerant response
//! parsing, consistency grouping, dynamic guidance ratio and plan assembly.

mod alpha;
pub mod backend;
mod compile;
mod groups;
mod parse;
mod template;

use thiserror::Error;

pub use alpha::{parse_alpha_reply, request_dynamic_alpha, AlphaOutcome};
pub use backend::{BackendError, DecodingParams, LlmBackend};
pub use compile::{
    compile_batch, compile_plan, AlphaRequest, BatchFailure, BatchReport, CompileConfig, CompileReport,
    StepReport,
};
pub use groups::{build_consistency_groups, build_consistency_groups_with, GroupOptions};
pub use parse::{
    parse_step1_response, parse_step2_response, ParseDiagnostic, ParseOutcome, ParseStatus, Step1Scene,
};
pub use template::{
    entity_listing, render_alpha_prompt, render_step1_prompt, render_step2_prompt, PromptTemplate, TemplateId,
};

use crate::plan::VideoPlan;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("template error: {0}")]
    Template(String),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("compile failed: {}", .report.summary())]
    CompileFailed {
        plan: Box<VideoPlan>,
        report: Box<CompileReport>,
    },
}

impl PlannerError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Template(_) => "TEMPLATE_ERROR",
            Self::Backend(_) => "BACKEND_ERROR",
            Self::CompileFailed { .. } => "COMPILE_FAILED",
        }
    }
}
