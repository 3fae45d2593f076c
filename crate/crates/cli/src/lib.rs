//! `vdgpt` command line. Every command is a request to the service: either
//! the one at `--server`, or a private instance started in-process on a
//! loopback port with a throwaway plan store.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;
use vdgpt_client::api::*;
use vdgpt_client::{Client, ClientError};
use vdgpt_core::datasets::{read_prompt_set, write_prompt_set, PromptRecord};
use vdgpt_core::eval::{
    read_detection_file, read_embedding_file, render_table, ConsistencyDenominator, EvalSettings,
};
use vdgpt_core::plan::{deserialize_plan, serialize_plan, to_canonical_json};
use vdgpt_core::planner::AlphaRequest;
use vdgpt_core::VideoPlan;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vdgpt", version, about = "Multi-scene video planning, layout and evaluation")]
pub struct Cli {
    /// Service base URL; a private in-process service is used when absent.
    #[arg(long, global = true, env = "VDGPT_SERVER")]
    pub server: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a prompt into a video plan.
    Plan(PlanArgs),
    /// Interpolate a plan's keyframes into dense per-frame layouts.
    Interp(InterpArgs),
    /// Run the desk-scale sampler on one scene and dump the latent.
    Sample(SampleArgs),
    /// Train the toy grounding model and write a checkpoint.
    Train(TrainArgs),
    /// Score prompts for movement, VPEval skills and consistency.
    Eval(EvalArgs),
    /// Generate an evaluation prompt set.
    Datasets(DatasetArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Replay,
    Http,
}

/// `llm` or a number in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaArg(pub AlphaRequest);

impl FromStr for AlphaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("llm") {
            return Ok(Self(AlphaRequest::LlmDynamic));
        }
        let v: f64 = s.parse().map_err(|_| format!("expected a number or \"llm\", got {s:?}"))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("alpha must lie in [0, 1], got {v}"));
        }
        Ok(Self(AlphaRequest::Static(v)))
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    pub prompt: String,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Compile report; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<AlphaArg>,
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendKind,
    #[arg(long, required_if_eq("backend", "replay"))]
    pub replay: Option<PathBuf>,
    #[arg(long, env = "VDGPT_BASE_URL", default_value = "https://api.openai.com/v1")]
    pub base_url: String,
    #[arg(long, env = "VDGPT_MODEL", default_value = "gpt-4")]
    pub model: String,
    /// Mock only: garble the scene list for prompts containing this text.
    #[arg(long)]
    pub corrupt_step1: Vec<String>,
    /// Mock only: drop a frame from layouts of scenes containing this text.
    #[arg(long)]
    pub corrupt_step2: Vec<String>,
}

#[derive(Debug, Args)]
pub struct InterpArgs {
    pub plan: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Frames per scene; each scene's own target when absent.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Ddim,
    Plms,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub plan: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Seed of the model initialization and embedding provider; use the
    /// training seed with a trained checkpoint.
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub scene: u32,
    #[arg(long, value_enum, default_value = "ddim")]
    pub sampler: SamplerArg,
    #[arg(long)]
    pub no_grounding: bool,
    /// Latent dump.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Guided-step trace; defaults to `<out>.trace.json`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prompt-set file (JSON lines).
    pub prompts: PathBuf,
    /// Plans used as layout oracles: a directory of `<prompt id>.json`
    /// files, or one plan file for every prompt.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Compile every prompt with the mock planner and use the result as
    /// its layout oracle.
    #[arg(long, conflicts_with = "oracle")]
    pub oracle_mock: bool,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Divide consistency sums by the scene count instead of the pair count.
    #[arg(long)]
    pub literal_denominator: bool,
    /// Report file (JSON); the table is printed to stdout.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Direction,
    Coref,
    Hirest,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(value_enum)]
    pub kind: DatasetKind,
    /// Direction: caption file, one per line; bundled seeds when absent.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// HiREST: the task prompt.
    #[arg(long, required_if_eq("kind", "hirest"))]
    pub prompt: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub scenes: i64,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "vdgpt-store")]
    pub store: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => EXIT_INVALID,
            Self::Backend(_) => EXIT_BACKEND,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e.status() {
            Some(502) => Self::Backend(e.to_string()),
            Some(400 | 404 | 409 | 422) => Self::Invalid(e.to_string()),
            _ => Self::Internal(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

fn read_plan(path: &Path) -> Result<VideoPlan, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    deserialize_plan(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(path, to_canonical_json(value)).map_err(io_err(path))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(io_err(path))
}

pub async fn cmd_plan(client: &Client, args: &PlanArgs) -> Result<(), CliError> {
    let backend = match args.backend {
        BackendKind::Mock => BackendSpec::Mock {
            corrupt_step1: args.corrupt_step1.clone(),
            corrupt_step2: args.corrupt_step2.clone(),
            alpha_reply: None,
        },
        BackendKind::Replay => BackendSpec::Replay {
            path: absolute(args.replay.as_deref().expect("clap requires --replay"))?,
        },
        BackendKind::Http => BackendSpec::Http {
            base_url: args.base_url.clone(),
            model: args.model.clone(),
        },
    };
    let req = CompileRequest {
        prompt: args.prompt.clone(),
        alpha: args.alpha.map(|a| a.0),
        backend,
    };
    let view = client.compile(&req).await?;
    let report_path = args.report.clone().unwrap_or_else(|| sibling(&args.out, ".report.json"));
    if let Some(outcome) = &view.outcome {
        std::fs::write(&args.out, serialize_plan(&outcome.plan)).map_err(io_err(&args.out))?;
        write_json(&report_path, &outcome.report)?;
        println!(
            "{}: {} scene(s), {}",
            args.out.display(),
            outcome.plan.scenes.len(),
            outcome.report.summary()
        );
    }
    match (view.status, view.error) {
        (JobStatus::Succeeded, _) => Ok(()),
        (_, Some(e)) if e.code == "BACKEND_ERROR" => Err(CliError::Backend(e.message)),
        (_, Some(e)) if e.code == "COMPILE_FAILED" => Err(CliError::Invalid(format!(
            "plan invalid: {} (report in {})",
            e.message,
            report_path.display()
        ))),
        (_, Some(e)) => Err(CliError::Internal(format!("{}: {}", e.code, e.message))),
        (status, None) => Err(CliError::Internal(format!("compile job ended {status:?}"))),
    }
}

pub async fn cmd_interp(client: &Client, args: &InterpArgs) -> Result<(), CliError> {
    let plan = read_plan(&args.plan)?;
    let dense = client
        .interpolate(&InlineInterpolateRequest {
            plan,
            frames: args.frames,
        })
        .await?;
    write_json(&args.out, &dense)
}

pub async fn cmd_sample(client: &Client, args: &SampleArgs) -> Result<(), CliError> {
    let plan = read_plan(&args.plan)?;
    let req = SampleRequest {
        plan,
        scene: args.scene,
        checkpoint: args.checkpoint.as_deref().map(absolute).transpose()?,
        model_seed: args.model_seed,
        steps: args.steps,
        alpha: args.alpha,
        seed: args.seed,
        sampler: match args.sampler {
            SamplerArg::Ddim => SamplerKind::Ddim,
            SamplerArg::Plms => SamplerKind::Plms,
        },
        grounding: !args.no_grounding,
    };
    let resp = client.sample(&req).await?;
    write_json(&args.out, &resp.latent)?;
    let trace = args.trace.clone().unwrap_or_else(|| sibling(&args.out, ".trace.json"));
    write_json(&trace, &resp.trace)?;
    println!(
        "{} of {} steps guided ({} model calls)",
        resp.trace.guided_steps, resp.trace.steps, resp.trace.model_calls
    );
    Ok(())
}

pub async fn cmd_train(client: &Client, args: &TrainArgs) -> Result<(), CliError> {
    let summary = client
        .train(&TrainRequest {
            steps: args.steps,
            seed: args.seed,
            out: Some(absolute(&args.out)?),
        })
        .await?;
    println!(
        "eval loss {:.6} -> {:.6} ({:.1}%), {} of {} parameters trained, frozen unchanged: {}",
        summary.initial_eval_loss,
        summary.final_eval_loss,
        100.0 * summary.final_eval_loss / summary.initial_eval_loss,
        summary.trainable_params,
        summary.total_params,
        summary.frozen_unchanged
    );
    Ok(())
}

fn load_oracles(path: &Path, records: &[PromptRecord]) -> Result<BTreeMap<String, VideoPlan>, CliError> {
    let mut plans = BTreeMap::new();
    if path.is_dir() {
        for r in records {
            let file = path.join(format!("{}.json", r.id));
            if file.exists() {
                plans.insert(r.id.clone(), read_plan(&file)?);
            }
        }
    } else {
        let plan = read_plan(path)?;
        for r in records {
            plans.insert(r.id.clone(), plan.clone());
        }
    }
    Ok(plans)
}

async fn mock_oracles(client: &Client, records: &[PromptRecord]) -> Result<BTreeMap<String, VideoPlan>, CliError> {
    let mut plans = BTreeMap::new();
    for r in records {
        let view = client
            .compile(&CompileRequest {
                prompt: r.text.clone(),
                alpha: None,
                backend: BackendSpec::default(),
            })
            .await?;
        if let (JobStatus::Succeeded, Some(o)) = (view.status, view.outcome) {
            plans.insert(r.id.clone(), o.plan);
        }
    }
    Ok(plans)
}

pub async fn cmd_eval(client: &Client, args: &EvalArgs) -> Result<(), CliError> {
    let records = read_prompt_set(&args.prompts).map_err(|e| CliError::Invalid(e.to_string()))?;
    let plans = match (&args.oracle, args.oracle_mock) {
        (Some(p), _) => load_oracles(p, &records)?,
        (None, true) => mock_oracles(client, &records).await?,
        (None, false) => BTreeMap::new(),
    };
    let detections = match &args.detections {
        Some(p) => read_detection_file(p).map_err(|e| CliError::Invalid(e.to_string()))?,
        None => Vec::new(),
    };
    let embeddings = match &args.embeddings {
        Some(p) => read_embedding_file(p).map_err(|e| CliError::Invalid(e.to_string()))?,
        None => Vec::new(),
    };
    let settings = EvalSettings {
        epsilon: args.epsilon,
        denominator: if args.literal_denominator {
            ConsistencyDenominator::Scenes
        } else {
            ConsistencyDenominator::Pairs
        },
        ..Default::default()
    };
    let report = client
        .eval(&EvalRequest {
            records,
            plans,
            detections,
            embeddings,
            settings,
        })
        .await?;
    write_json(&args.out, &report)?;
    print!("{}", render_table(&report));
    Ok(())
}

pub async fn cmd_datasets(client: &Client, args: &DatasetArgs) -> Result<(), CliError> {
    let req = match args.kind {
        DatasetKind::Direction => DatasetRequest::Direction {
            seeds: match &args.seeds {
                Some(p) => Some(
                    std::fs::read_to_string(p)
                        .map_err(io_err(p))?
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .map(String::from)
                        .collect(),
                ),
                None => None,
            },
        },
        DatasetKind::Coref => DatasetRequest::Coref,
        DatasetKind::Hirest => DatasetRequest::Hirest {
            prompt: args.prompt.clone().expect("clap requires --prompt"),
            n_scenes: args.scenes,
        },
    };
    let resp = client.dataset(&req).await?;
    for d in &resp.diagnostics {
        eprintln!("warning: {d}");
    }
    write_prompt_set(&args.out, &resp.records).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{}: {} record(s)", args.out.display(), resp.records.len());
    Ok(())
}

pub async fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Invalid(format!("bad listen address: {e}")))?;
    let (local, handle) = vdgpt_service::spawn(addr, &args.store)
        .await
        .map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!("listening on http://{local}, store {}", args.store.display());
    handle.await.map_err(|e| CliError::Internal(e.to_string()))
}

/// Runs one parsed command line.
pub async fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Serve(args) = &cli.command {
        return cmd_serve(args).await;
    }
    // Keeps the private store alive until the command finishes.
    let mut _store = None;
    let client = match &cli.server {
        Some(url) => Client::new(url),
        None => {
            let dir = tempfile::tempdir().map_err(|e| CliError::Internal(e.to_string()))?;
            let (addr, _) = vdgpt_service::spawn(SocketAddr::from(([127, 0, 0, 1], 0)), dir.path())
                .await
                .map_err(|e| CliError::Internal(e.to_string()))?;
            _store = Some(dir);
            Client::new(&format!("http://{addr}"))
        }
    };
    match &cli.command {
        Command::Plan(a) => cmd_plan(&client, a).await,
        Command::Interp(a) => cmd_interp(&client, a).await,
        Command::Sample(a) => cmd_sample(&client, a).await,
        Command::Train(a) => cmd_train(&client, a).await,
        Command::Eval(a) => cmd_eval(&client, a).await,
        Command::Datasets(a) => cmd_datasets(&client, a).await,
        Command::Serve(_) => unreachable!("handled above"),
    }
}
