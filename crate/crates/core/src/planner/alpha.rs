use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::plan::{AlphaSetting, DEFAULT_ALPHA, DYNAMIC_ALPHA_MAX};

use super::backend::complete_with_retries;
use super::{render_alpha_prompt, DecodingParams, LlmBackend, PlannerError, PromptTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaOutcome {
    pub setting: AlphaSetting,
    pub response: String,
    pub diagnostics: Vec<String>,
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)").unwrap())
}

/// Reads the first number in `reply` as a dynamic α clamped to
/// `[0, 0.3]`; without one, falls back to the static default.
pub fn parse_alpha_reply(reply: &str) -> (AlphaSetting, Vec<String>) {
    let mut diags = Vec::new();
    let value = number_re()
        .find(reply)
        .and_then(|m| m.as_str().parse::<f64>().ok())
        .filter(|v| v.is_finite());
    match value {
        Some(v) => {
            let c = v.clamp(0.0, DYNAMIC_ALPHA_MAX);
            if c != v {
                diags.push(format!("alpha {v} outside [0, {DYNAMIC_ALPHA_MAX}]; clamped to {c}"));
            }
            (AlphaSetting::dynamic(c), diags)
        }
        None => {
            diags.push(format!(
                "no number in alpha reply {:?}; using static {DEFAULT_ALPHA}",
                reply.chars().take(80).collect::<String>()
            ));
            (AlphaSetting::fixed(DEFAULT_ALPHA), diags)
        }
    }
}

/// Asks the backend what fraction of denoising steps should be layout
/// guided for `source_prompt`.
pub async fn request_dynamic_alpha(
    source_prompt: &str,
    backend: &dyn LlmBackend,
    template: &PromptTemplate,
    params: &DecodingParams,
    retries: u32,
) -> Result<AlphaOutcome, PlannerError> {
    let prompt = render_alpha_prompt(source_prompt, template)?;
    let response = complete_with_retries(backend, &prompt, params, retries, Duration::from_millis(50)).await?;
    let (setting, diagnostics) = parse_alpha_reply(&response);
    Ok(AlphaOutcome {
        setting,
        response,
        diagnostics,
    })
}
