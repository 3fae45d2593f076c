//! Synchronous bodies of the compute endpoints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdgpt_client::api::*;
use vdgpt_core::datasets::{
    default_direction_seeds, default_entity_table, default_episode_templates, gen_actionbench_direction, gen_coref_sv,
    hirest_scene_prompts, DatasetError, PromptRecord,
};
use vdgpt_core::eval::{evaluate_prompts, EvalSources, MetricReport, RecordedDetections};
use vdgpt_core::layout::Direction;
use vdgpt_core::VideoPlan;
use vdgpt_grounding::{
    denoise_sample, load_checkpoint, save_checkpoint, scene_example, train_toy, DenoiseSchedule, EmbeddingCache,
    EmbeddingProvider, HashEmbeddingProvider, LatentGrid, Parameters, ToyConfig, ToyDataset,
    ToyDenoiser, ToyModel,
};

use crate::error::HttpError;

pub fn sample(req: &SampleRequest) -> Result<SampleResponse, HttpError> {
    let config = ToyConfig::default();
    let mut model = ToyModel::new(config, req.model_seed)?;
    if let Some(path) = &req.checkpoint {
        load_checkpoint(path, &mut model)?;
    }
    let schedule = DenoiseSchedule::linear(req.steps)?.with_alpha(req.alpha);
    let provider = HashEmbeddingProvider::new(config.d_e, req.model_seed);
    let mut cache = EmbeddingCache::new(&provider);
    let example = scene_example(&req.plan, req.scene, &mut cache, config.latent_shape)?;
    let description = req
        .plan
        .scenes
        .iter()
        .find(|s| s.index == req.scene)
        .map(|s| s.description.clone())
        .unwrap_or_default();
    let denoiser = ToyDenoiser {
        model: &model,
        grounding: (req.grounding && !example.names.is_empty()).then_some(&example),
        text: vec![provider.embed_text(&description).values],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let init = LatentGrid::standard_normal(config.latent_shape, &mut rng);
    let out = denoise_sample(&init, &schedule, &denoiser, req.sampler)?;
    let (f, c, h, w) = out.latent.shape();
    Ok(SampleResponse {
        trace: SampleTrace {
            steps: req.steps,
            alpha: req.alpha,
            sampler: req.sampler,
            seed: req.seed,
            scene: req.scene,
            guided_steps: out.guided_steps_executed,
            model_calls: out.model_calls,
            guided: out.guided,
        },
        latent: LatentDump {
            shape: [f, c, h, w],
            data: out.latent.data.iter().copied().collect(),
        },
    })
}

pub fn train(req: &TrainRequest) -> Result<TrainSummary, HttpError> {
    let config = ToyConfig::default();
    let mut model = ToyModel::new(config, req.seed)?;
    let before = model.frozen.flatten();
    let dataset = ToyDataset::new(config, req.seed);
    let report = train_toy(&mut model, &dataset, req.steps, req.seed)?;
    let frozen_unchanged = model
        .frozen
        .flatten()
        .iter()
        .zip(&before)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    if let Some(out) = &req.out {
        save_checkpoint(out, &model)?;
    }
    Ok(TrainSummary {
        steps: req.steps,
        initial_eval_loss: report.initial_eval_loss,
        final_eval_loss: report.final_eval_loss,
        trainable_params: report.trainable_params,
        total_params: report.total_params,
        frozen_unchanged,
    })
}

pub fn eval(req: &EvalRequest) -> MetricReport {
    let mut sources = EvalSources {
        plans: req.plans.clone(),
        ..Default::default()
    };
    let mut by_prompt: std::collections::BTreeMap<&str, Vec<_>> = Default::default();
    for d in &req.detections {
        by_prompt.entry(d.prompt_id.as_str()).or_default().push(d);
    }
    for (id, recs) in by_prompt {
        sources
            .detections
            .insert(id.to_string(), RecordedDetections::from_records(recs));
    }
    for e in &req.embeddings {
        sources.embeddings.insert(e.prompt_id.clone(), e.embeddings.clone());
    }
    evaluate_prompts(&req.records, &sources, &req.settings)
}

/// Movement for each requested entity, plus VPEval and consistency when
/// asked, with the plan itself as the detector.
pub fn metrics_preview(id: &str, plan: &VideoPlan, req: &MetricsPreviewRequest) -> MetricReport {
    let direction = req.direction.or_else(|| {
        Direction::ALL
            .into_iter()
            .find(|d| plan.source_prompt.contains(d.phrase()))
    });
    let mut records = Vec::new();
    if let Some(d) = direction {
        let targets: Vec<String> = match &req.target {
            Some(t) => vec![t.clone()],
            None => {
                let mut names: Vec<String> = Vec::new();
                for e in plan.scenes.iter().flat_map(|s| &s.entities) {
                    if !names.contains(&e.name) {
                        names.push(e.name.clone());
                    }
                }
                names
            }
        };
        for t in targets {
            let mut r = PromptRecord::new(id, plan.source_prompt.clone());
            r.expected_direction = Some(d);
            r.target_entity = Some(t);
            records.push(r);
        }
    }
    if req.vpeval.is_some() || req.embeddings.is_some() {
        let mut r = PromptRecord::new(id, plan.source_prompt.clone());
        r.vpeval = req.vpeval.clone();
        records.push(r);
    }
    let mut sources = EvalSources::default();
    sources.plans.insert(id.to_string(), plan.clone());
    if let Some(e) = &req.embeddings {
        sources.embeddings.insert(id.to_string(), e.clone());
    }
    evaluate_prompts(&records, &sources, &req.settings)
}

pub fn dataset(req: &DatasetRequest) -> Result<DatasetResponse, DatasetError> {
    Ok(match req {
        DatasetRequest::Direction { seeds } => {
            let seeds = seeds.clone().unwrap_or_else(default_direction_seeds);
            let g = gen_actionbench_direction(&seeds);
            DatasetResponse {
                records: g.items,
                diagnostics: g.diagnostics,
            }
        }
        DatasetRequest::Coref => DatasetResponse {
            records: gen_coref_sv(&default_episode_templates(), &default_entity_table())?
                .iter()
                .map(|e| e.to_record())
                .collect(),
            diagnostics: Vec::new(),
        },
        DatasetRequest::Hirest { prompt, n_scenes } => {
            let scenes = hirest_scene_prompts(prompt, *n_scenes)?;
            let mut r = PromptRecord::new("hirest-001", prompt.clone());
            r.scenes = scenes;
            DatasetResponse {
                records: vec![r],
                diagnostics: Vec::new(),
            }
        }
    })
}

impl From<DatasetError> for HttpError {
    fn from(e: DatasetError) -> Self {
        HttpError::bad_request(e.code(), e.to_string())
    }
}
