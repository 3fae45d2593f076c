use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::plan::{
    validate_plan, AlphaSetting, ProvenanceEntry, SceneSpec, ValidationReport, VideoPlan, DEFAULT_ALPHA,
    DEFAULT_NUM_KEYFRAMES, DEFAULT_TARGET_FRAMES,
};

use super::backend::complete_with_retries;
use super::{
    build_consistency_groups_with, parse_step1_response, parse_step2_response, render_step1_prompt,
    render_step2_prompt, request_dynamic_alpha, BackendError, DecodingParams, GroupOptions, LlmBackend,
    ParseDiagnostic, ParseOutcome, ParseStatus, PlannerError, PromptTemplate,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum AlphaRequest {
    Static(f64),
    LlmDynamic,
}

#[derive(Debug, Clone)]
pub struct CompileConfig {
    pub step1_template: PromptTemplate,
    pub step2_template: PromptTemplate,
    pub alpha_template: PromptTemplate,
    pub decoding: DecodingParams,
    /// Re-prompts allowed per step after an unusable reply.
    pub max_repair_attempts: u32,
    /// Extra attempts for retryable transport failures.
    pub backend_retries: u32,
    pub backoff: Duration,
    /// Concurrent step-2 requests; forced to 1 for serial backends.
    pub fanout: usize,
    pub alpha: AlphaRequest,
    pub groups: GroupOptions,
    pub num_keyframes: u32,
    pub target_frames: u32,
}

impl Default for CompileConfig {
    fn default() -> Self {
        Self {
            step1_template: PromptTemplate::default_step1(),
            step2_template: PromptTemplate::default_step2(),
            alpha_template: PromptTemplate::default_dynamic_alpha(),
            decoding: DecodingParams::default(),
            max_repair_attempts: 2,
            backend_retries: 2,
            backoff: Duration::from_millis(50),
            fanout: 4,
            alpha: AlphaRequest::Static(DEFAULT_ALPHA),
            groups: GroupOptions::default(),
            num_keyframes: DEFAULT_NUM_KEYFRAMES,
            target_frames: DEFAULT_TARGET_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<u32>,
    pub status: ParseStatus,
    pub attempts: u32,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl StepReport {
    fn new(step: &str, scene: Option<u32>) -> Self {
        Self {
            step: step.to_string(),
            scene,
            status: ParseStatus::Invalid,
            attempts: 0,
            diagnostics: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub model: String,
    pub step1: StepReport,
    pub scenes: Vec<StepReport>,
    #[serde(default)]
    pub alpha_diagnostics: Vec<String>,
    pub validation: ValidationReport,
    /// Scenes whose layout never parsed.
    pub failed_scenes: Vec<u32>,
    /// Re-prompts issued across all steps.
    pub repair_prompts: u32,
    /// 1 when the plan parsed and validated, else 0.
    pub valid_samples: usize,
    pub valid: bool,
}

impl CompileReport {
    pub fn summary(&self) -> String {
        if self.step1.status == ParseStatus::Invalid {
            return format!(
                "scene list unusable after {} attempt(s): {}",
                self.step1.attempts,
                join_codes(&self.step1.diagnostics)
            );
        }
        let mut parts = Vec::new();
        for s in self.scenes.iter().filter(|s| s.status == ParseStatus::Invalid) {
            parts.push(format!(
                "scene {} layout unusable after {} attempt(s): {}",
                s.scene.unwrap_or(0),
                s.attempts,
                join_codes(&s.diagnostics)
            ));
        }
        if !self.validation.violations.is_empty() {
            parts.push(format!("{} validation violation(s)", self.validation.violations.len()));
        }
        if parts.is_empty() {
            "ok".to_string()
        } else {
            parts.join("; ")
        }
    }
}

fn join_codes(d: &[ParseDiagnostic]) -> String {
    let mut codes: Vec<&str> = d.iter().map(|d| d.code.as_str()).collect();
    codes.dedup();
    codes.join(", ")
}

fn repair_prompt<T>(base: &str, outcome: &ParseOutcome<T>) -> String {
    format!(
        "Note: a previous answer was rejected ({}). Follow the answer format exactly.\n\n{base}",
        outcome.diagnostic_summary()
    )
}

struct StepRun<T> {
    outcome: ParseOutcome<T>,
    report: StepReport,
    provenance: Vec<ProvenanceEntry>,
}

/// Sends `base`, re-prompting with the parser's diagnostics while the reply
/// stays unusable.
async fn run_step<T>(
    backend: &dyn LlmBackend,
    config: &CompileConfig,
    step: &str,
    scene: Option<u32>,
    base: &str,
    parse: impl Fn(&str) -> ParseOutcome<T>,
) -> Result<StepRun<T>, BackendError> {
    let mut report = StepReport::new(step, scene);
    let mut provenance = Vec::new();
    let mut prompt = base.to_string();
    loop {
        report.attempts += 1;
        let response =
            complete_with_retries(backend, &prompt, &config.decoding, config.backend_retries, config.backoff).await?;
        let outcome = parse(&response);
        provenance.push(ProvenanceEntry {
            step: step.to_string(),
            scene,
            attempt: report.attempts,
            response,
        });
        report.status = outcome.status;
        report.diagnostics = outcome.diagnostics.clone();
        if outcome.is_usable() || report.attempts > config.max_repair_attempts {
            return Ok(StepRun {
                outcome,
                report,
                provenance,
            });
        }
        prompt = repair_prompt(base, &outcome);
    }
}

/// Compiles `source_prompt` into a validated plan: scene list, consistency
/// groups, per-scene keyframe layouts (requested concurrently), optional
/// dynamic α, then validation.
///
/// No timestamps are written, so replaying the same responses reproduces
/// the plan byte for byte.
pub async fn compile_plan(
    source_prompt: &str,
    backend: &dyn LlmBackend,
    config: &CompileConfig,
) -> Result<(VideoPlan, CompileReport), PlannerError> {
    let model = backend.model_id();
    let mut plan = VideoPlan::new(source_prompt, Vec::new());
    plan.provenance.model = model.clone();
    plan.alpha = match config.alpha {
        AlphaRequest::Static(v) => AlphaSetting::fixed(v),
        AlphaRequest::LlmDynamic => AlphaSetting::default(),
    };

    let step1_prompt = render_step1_prompt(source_prompt, &config.step1_template)?;
    let s1 = run_step(backend, config, "step1", None, &step1_prompt, parse_step1_response).await?;
    plan.provenance.responses.extend(s1.provenance);
    let mut report = CompileReport {
        model,
        step1: s1.report,
        scenes: Vec::new(),
        alpha_diagnostics: Vec::new(),
        validation: ValidationReport::default(),
        failed_scenes: Vec::new(),
        repair_prompts: 0,
        valid_samples: 0,
        valid: false,
    };
    report.repair_prompts += report.step1.attempts - 1;

    let Some(mut scenes) = s1.outcome.fragment else {
        report.validation = validate_plan(&plan);
        return Err(PlannerError::CompileFailed {
            plan: Box::new(plan),
            report: Box::new(report),
        });
    };
    for s in &mut scenes {
        s.num_keyframes = config.num_keyframes;
        s.target_frames = config.target_frames;
    }

    let fanout = if backend.supports_concurrency() {
        config.fanout.max(1)
    } else {
        1
    };
    let mut jobs = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        jobs.push((scene.clone(), render_step2_prompt(scene, &config.step2_template)?));
    }
    let results: Vec<Result<(SceneSpec, StepRun<SceneSpec>), BackendError>> = stream::iter(jobs)
        .map(|(scene, prompt)| async move {
            let run = run_step(backend, config, "step2", Some(scene.index), &prompt, |raw| {
                parse_step2_response(raw, &scene)
            })
            .await?;
            Ok((scene, run))
        })
        .buffered(fanout)
        .collect()
        .await;

    let mut final_scenes = Vec::with_capacity(results.len());
    for r in results {
        let (scene, run) = r?;
        report.repair_prompts += run.report.attempts - 1;
        plan.provenance.responses.extend(run.provenance);
        if run.report.status == ParseStatus::Invalid {
            report.failed_scenes.push(scene.index);
        }
        report.scenes.push(run.report);
        final_scenes.push(run.outcome.fragment.unwrap_or(scene));
    }
    plan.consistency = build_consistency_groups_with(&final_scenes, config.groups);
    plan.scenes = final_scenes;

    if config.alpha == AlphaRequest::LlmDynamic {
        let out = request_dynamic_alpha(
            source_prompt,
            backend,
            &config.alpha_template,
            &config.decoding,
            config.backend_retries,
        )
        .await?;
        plan.alpha = out.setting;
        report.alpha_diagnostics = out.diagnostics;
        plan.provenance.responses.push(ProvenanceEntry {
            step: "alpha".to_string(),
            scene: None,
            attempt: 1,
            response: out.response,
        });
    }

    report.validation = validate_plan(&plan);
    report.valid = report.failed_scenes.is_empty() && report.validation.is_valid();
    report.valid_samples = usize::from(report.valid);
    if report.valid {
        Ok((plan, report))
    } else {
        Err(PlannerError::CompileFailed {
            plan: Box::new(plan),
            report: Box::new(report),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub index: usize,
    pub prompt: String,
    pub code: String,
    pub message: String,
}

/// Counts over a batch; `valid_samples` is the number of prompts whose plan
/// parsed and validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub valid_samples: usize,
    pub failures: Vec<BatchFailure>,
}

/// Compiles every prompt, `concurrency` prompts at a time. Returns the valid
/// plans (in input order, `None` where compilation failed) and the counts.
pub async fn compile_batch(
    prompts: &[String],
    backend: &dyn LlmBackend,
    config: &CompileConfig,
    concurrency: usize,
) -> (Vec<Option<VideoPlan>>, BatchReport) {
    let results: Vec<_> = stream::iter(prompts.iter().enumerate())
        .map(|(i, p)| async move { (i, compile_plan(p, backend, config).await) })
        .buffered(concurrency.max(1))
        .collect()
        .await;
    let mut plans = Vec::with_capacity(prompts.len());
    let mut report = BatchReport {
        total: prompts.len(),
        valid_samples: 0,
        failures: Vec::new(),
    };
    for (i, r) in results {
        match r {
            Ok((plan, rep)) => {
                report.valid_samples += rep.valid_samples;
                plans.push(Some(plan));
            }
            Err(e) => {
                let message = match &e {
                    PlannerError::CompileFailed { report, .. } => report.summary(),
                    other => other.to_string(),
                };
                report.failures.push(BatchFailure {
                    index: i,
                    prompt: prompts[i].clone(),
                    code: e.code().to_string(),
                    message,
                });
                plans.push(None);
            }
        }
    }
    (plans, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{serialize_plan, AlphaMode, ConsistencyGroups};
    use crate::planner::backend::{RecordingBackend, ReplayBackend, RuleBasedMock, CHEF_PROMPT};

    #[tokio::test]
    async fn chef_scenario_compiles() {
        let mock = RuleBasedMock::new();
        let (plan, report) = compile_plan(CHEF_PROMPT, &mock, &CompileConfig::default()).await.unwrap();
        assert_eq!(plan.scenes.len(), 4);
        assert_eq!(
            plan.consistency,
            ConsistencyGroups::from([("chef", vec![1, 2, 3, 4]), ("oven", vec![1])])
        );
        assert!(report.valid);
        assert_eq!(report.valid_samples, 1);
        assert_eq!(report.repair_prompts, 0);
        assert!(validate_plan(&plan).is_valid());
        // step1 + 4 step2 responses
        assert_eq!(plan.provenance.responses.len(), 5);
        assert_eq!(plan.provenance.model, "rule-based-mock");
    }

    #[tokio::test]
    async fn scene_three_corruption_is_pinpointed() {
        let mock = RuleBasedMock::new().corrupt_step2_matching("shapes the dough");
        let err = compile_plan(CHEF_PROMPT, &mock, &CompileConfig::default()).await.unwrap_err();
        assert_eq!(err.code(), "COMPILE_FAILED");
        let PlannerError::CompileFailed { plan, report } = err else { unreachable!() };
        assert_eq!(report.failed_scenes, vec![3]);
        assert_eq!(report.scenes[2].attempts, 3);
        assert_eq!(report.repair_prompts, 2);
        assert!(report.summary().contains("scene 3"));
        assert_eq!(plan.scenes.len(), 4);
        assert!(plan.scenes[0].is_layout_complete());
        assert!(!plan.scenes[2].is_layout_complete());
        let step2_scene3 = plan
            .provenance
            .responses
            .iter()
            .filter(|r| r.step == "step2" && r.scene == Some(3))
            .count();
        assert_eq!(step2_scene3, 3);
    }

    #[tokio::test]
    async fn step1_failure_is_compile_failed() {
        let mock = RuleBasedMock::new().corrupt_step1_matching("cakes");
        let err = compile_plan(CHEF_PROMPT, &mock, &CompileConfig::default()).await.unwrap_err();
        let PlannerError::CompileFailed { report, .. } = err else { panic!() };
        assert_eq!(report.step1.attempts, 3);
        assert_eq!(report.step1.status, ParseStatus::Invalid);
    }

    #[tokio::test]
    async fn dynamic_alpha_recorded() {
        let mock = RuleBasedMock::new().with_alpha_reply("0.3");
        let config = CompileConfig {
            alpha: AlphaRequest::LlmDynamic,
            ..Default::default()
        };
        let (plan, _) = compile_plan(CHEF_PROMPT, &mock, &config).await.unwrap();
        assert_eq!(plan.alpha.mode, AlphaMode::LlmDynamic);
        assert_eq!(plan.alpha.guided_steps(50), 15);
        assert_eq!(plan.provenance.responses.last().unwrap().step, "alpha");
    }

    #[tokio::test]
    async fn replay_is_byte_deterministic() {
        let rec = RecordingBackend::new(RuleBasedMock::new());
        let config = CompileConfig {
            alpha: AlphaRequest::LlmDynamic,
            ..Default::default()
        };
        let (live, _) = compile_plan(CHEF_PROMPT, &rec, &config).await.unwrap();
        let replay = ReplayBackend::new(rec.records()).with_model_id("rule-based-mock");
        let (replayed, _) = compile_plan(CHEF_PROMPT, &replay, &config).await.unwrap();
        assert_eq!(serialize_plan(&live), serialize_plan(&replayed));
        assert_eq!(replay.remaining(), 0);
    }

    #[tokio::test]
    async fn serial_backend_gets_fanout_one() {
        struct Serial(RuleBasedMock, std::sync::atomic::AtomicBool);
        #[async_trait::async_trait]
        impl LlmBackend for Serial {
            fn model_id(&self) -> String {
                "serial".into()
            }
            fn supports_concurrency(&self) -> bool {
                false
            }
            async fn complete(&self, p: &str, d: &DecodingParams) -> Result<String, BackendError> {
                use std::sync::atomic::Ordering;
                assert!(!self.1.swap(true, Ordering::SeqCst), "overlapping calls");
                tokio::task::yield_now().await;
                let out = self.0.complete(p, d).await;
                self.1.store(false, Ordering::SeqCst);
                out
            }
        }
        let b = Serial(RuleBasedMock::new(), Default::default());
        assert!(compile_plan(CHEF_PROMPT, &b, &CompileConfig::default()).await.is_ok());
    }

    #[tokio::test]
    async fn batch_counts_valid_samples() {
        let prompts: Vec<String> = (0..20)
            .map(|i| format!("[item {i:03}] a red ball rolling from left to right"))
            .collect();
        let mut mock = RuleBasedMock::new();
        for i in [3, 7, 11] {
            mock = mock.corrupt_step2_matching(&format!("[item {i:03}]"));
        }
        let (plans, report) = compile_batch(&prompts, &mock, &CompileConfig::default(), 8).await;
        assert_eq!(report.total, 20);
        assert_eq!(report.valid_samples, 17);
        let failed: Vec<usize> = report.failures.iter().map(|f| f.index).collect();
        assert_eq!(failed, vec![3, 7, 11]);
        assert!(plans[3].is_none() && plans[4].is_some());
    }
}
