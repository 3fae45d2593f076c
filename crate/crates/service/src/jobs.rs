use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use tokio::task::AbortHandle;
use vdgpt_client::api::{ApiError, BackendSpec, CompileOutcome, CompileRequest, JobStatus, JobView};
use vdgpt_core::planner::backend::{ChatCompletionsBackend, ReplayBackend, RuleBasedMock};
use vdgpt_core::planner::{compile_plan, BackendError, CompileConfig, LlmBackend, PlannerError};

struct Job {
    view: JobView,
    abort: Option<AbortHandle>,
}

/// Background compilations, polled by id.
#[derive(Default)]
pub struct JobRegistry {
    next: AtomicU64,
    jobs: Mutex<HashMap<String, Job>>,
}

impl JobRegistry {
    pub fn start_compile(self: &Arc<Self>, req: CompileRequest) -> String {
        let id = format!("job-{:06}", self.next.fetch_add(1, Ordering::SeqCst) + 1);
        let view = JobView {
            id: id.clone(),
            status: JobStatus::Running,
            outcome: None,
            error: None,
        };
        let mut jobs = self.jobs.lock().expect("job table");
        jobs.insert(id.clone(), Job { view, abort: None });
        let registry = Arc::clone(self);
        let job_id = id.clone();
        let handle = tokio::spawn(async move {
            let (status, outcome, error) = run_compile(&req).await;
            registry.finish(&job_id, status, outcome, error);
        });
        if let Some(job) = jobs.get_mut(&id) {
            job.abort = Some(handle.abort_handle());
        }
        id
    }

    fn finish(&self, id: &str, status: JobStatus, outcome: Option<CompileOutcome>, error: Option<ApiError>) {
        let mut jobs = self.jobs.lock().expect("job table");
        if let Some(job) = jobs.get_mut(id) {
            if job.view.status == JobStatus::Running {
                job.view.status = status;
                job.view.outcome = outcome;
                job.view.error = error;
                job.abort = None;
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<JobView> {
        self.jobs.lock().expect("job table").get(id).map(|j| j.view.clone())
    }

    /// Aborts a running job; finished jobs are returned unchanged.
    pub fn cancel(&self, id: &str) -> Option<JobView> {
        let mut jobs = self.jobs.lock().expect("job table");
        let job = jobs.get_mut(id)?;
        if job.view.status == JobStatus::Running {
            if let Some(h) = job.abort.take() {
                h.abort();
            }
            job.view.status = JobStatus::Cancelled;
        }
        Some(job.view.clone())
    }
}

pub fn make_backend(spec: &BackendSpec) -> Result<Box<dyn LlmBackend>, BackendError> {
    Ok(match spec {
        BackendSpec::Mock {
            corrupt_step1,
            corrupt_step2,
            alpha_reply,
        } => {
            let mut mock = RuleBasedMock::new();
            for p in corrupt_step1 {
                mock = mock.corrupt_step1_matching(p);
            }
            for p in corrupt_step2 {
                mock = mock.corrupt_step2_matching(p);
            }
            if let Some(r) = alpha_reply {
                mock = mock.with_alpha_reply(r);
            }
            Box::new(mock)
        }
        BackendSpec::Replay { path } => Box::new(ReplayBackend::from_file(path)?),
        BackendSpec::Http { base_url, model } => Box::new(ChatCompletionsBackend::from_env(base_url, model)?),
    })
}

fn api_error(code: &str, message: String) -> Option<ApiError> {
    Some(ApiError {
        code: code.to_string(),
        message,
        current_version: None,
    })
}

async fn run_compile(req: &CompileRequest) -> (JobStatus, Option<CompileOutcome>, Option<ApiError>) {
    let backend = match make_backend(&req.backend) {
        Ok(b) => b,
        Err(e) => return (JobStatus::Failed, None, api_error("BACKEND_ERROR", e.to_string())),
    };
    let mut config = CompileConfig::default();
    if let Some(a) = req.alpha {
        config.alpha = a;
    }
    match compile_plan(&req.prompt, backend.as_ref(), &config).await {
        Ok((plan, report)) => (JobStatus::Succeeded, Some(CompileOutcome { plan, report }), None),
        Err(PlannerError::CompileFailed { plan, report }) => {
            let message = report.summary();
            (
                JobStatus::Failed,
                Some(CompileOutcome {
                    plan: *plan,
                    report: *report,
                }),
                api_error("COMPILE_FAILED", message),
            )
        }
        Err(e) => (JobStatus::Failed, None, api_error(e.code(), e.to_string())),
    }
}
