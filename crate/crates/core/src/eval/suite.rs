use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::PromptRecord;
use crate::layout::densify_plan;
use crate::plan::VideoPlan;

use super::{
    aggregate, object_consistency, plan_boxes, read_jsonl, score_movement, ConsistencyDenominator,
    DetectorProvider, EvalError, FrameRef, LabeledBox, LayoutOracleDetector, MetricItem, MetricReport,
    RecordedDetections, ScaleThresholds, VpevalQuery,
};

/// Per-scene embeddings of a prompt's target object, one line per prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub prompt_id: String,
    pub embeddings: Vec<Vec<f64>>,
}

pub fn read_embedding_file(path: &Path) -> Result<Vec<EmbeddingRecord>, EvalError> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub epsilon: f64,
    pub denominator: ConsistencyDenominator,
    pub thresholds: ScaleThresholds,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            denominator: ConsistencyDenominator::default(),
            thresholds: ScaleThresholds::default(),
        }
    }
}

/// Where per-prompt evidence comes from. Plans act as layout oracles;
/// recorded detections take precedence when both exist.
#[derive(Debug, Clone, Default)]
pub struct EvalSources {
    pub plans: BTreeMap<String, VideoPlan>,
    pub detections: BTreeMap<String, RecordedDetections>,
    pub embeddings: BTreeMap<String, Vec<Vec<f64>>>,
}

/// Scores every prompt for each metric it carries labels for: movement
/// (`expected_direction`), VPEval skills (`vpeval`) and cross-scene
/// consistency (an embedding record).
pub fn evaluate_prompts(records: &[PromptRecord], sources: &EvalSources, settings: &EvalSettings) -> MetricReport {
    let mut items = Vec::new();
    for r in records {
        let plan = sources.plans.get(&r.id);
        let oracle = plan.and_then(|p| densify_plan(p, None).ok()).map(|d| LayoutOracleDetector::new(&d));
        let provider: Option<&dyn DetectorProvider> = match (sources.detections.get(&r.id), &oracle) {
            (Some(d), _) => Some(d),
            (None, Some(o)) => Some(o),
            (None, None) => None,
        };

        if let Some(direction) = r.expected_direction {
            let label = r
                .target_entity
                .clone()
                .or_else(|| plan.and_then(|p| p.scenes.first()?.entities.first().map(|e| e.name.clone())));
            let item = match (provider, label) {
                (Some(p), Some(label)) => {
                    let scene = plan
                        .and_then(|p| {
                            p.scenes
                                .iter()
                                .find(|s| s.entities.iter().any(|e| e.name == label || e.id == label))
                        })
                        .map(|s| s.index)
                        .unwrap_or(1);
                    let s = score_movement(p, scene, &label, direction, settings.epsilon);
                    let item = MetricItem::new(&r.id, "movement", s.score as f64);
                    match s.reason {
                        Some(reason) => item.with_details(reason),
                        None => item.with_details(format!("{label} {direction}")),
                    }
                }
                _ => MetricItem::new(&r.id, "movement", 0.0).with_details("NO_DETECTION"),
            };
            items.push(item);
        }

        if let Some(q) = &r.vpeval {
            let boxes = match (sources.detections.get(&r.id), plan) {
                (Some(d), _) => detection_boxes(d, q),
                (None, Some(p)) => plan_boxes(p, 1, 0),
                (None, None) => Vec::new(),
            };
            let res = q.evaluate(&boxes, settings.thresholds);
            let mut item = MetricItem::new(&r.id, q.skill(), res.score as f64);
            if let Some(reason) = res.reason {
                item = item.with_details(reason);
            }
            items.push(item);
        }

        if let Some(emb) = sources.embeddings.get(&r.id) {
            match object_consistency(emb, settings.denominator) {
                Ok(c) => items.push(MetricItem::new(&r.id, "consistency", c)),
                Err(e) => items.push(MetricItem::new(&r.id, "consistency", 0.0).with_details(e.code())),
            }
        }
    }
    aggregate(items)
}

fn detection_boxes(d: &RecordedDetections, q: &VpevalQuery) -> Vec<LabeledBox> {
    let labels: Vec<&str> = match q {
        VpevalQuery::Object { target } | VpevalQuery::Count { target, .. } => vec![target],
        VpevalQuery::Spatial { a, b, .. } | VpevalQuery::Scale { a, b, .. } => vec![a, b],
    };
    labels
        .into_iter()
        .flat_map(|l| d.detect(FrameRef { scene: 1, frame: 0 }, l))
        .map(|det| LabeledBox::new(&det.label, det.bbox))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ScaleRelation, SpatialRelation};
    use crate::layout::Direction;
    use crate::plan::testutil::sample_plan;

    #[test]
    fn oracle_suite_scores_movement_vpeval_and_consistency() {
        let plan = sample_plan();
        let mut rec = PromptRecord::new("p1", "the chef moves from left to right");
        rec.expected_direction = Some(Direction::LeftToRight);
        rec.target_entity = Some("chef".into());
        let mut rec2 = PromptRecord::new("p1", "");
        rec2.vpeval = Some(VpevalQuery::Spatial {
            a: "chef".into(),
            relation: SpatialRelation::Left,
            b: "oven".into(),
        });
        let mut rec3 = rec2.clone();
        rec3.vpeval = Some(VpevalQuery::Scale {
            a: "chef".into(),
            relation: ScaleRelation::Same,
            b: "oven".into(),
        });
        let mut sources = EvalSources::default();
        sources.plans.insert("p1".into(), plan);
        sources.embeddings.insert("p1".into(), vec![vec![1.0, 2.0]; 4]);
        let report = evaluate_prompts(&[rec.clone(), rec2, rec3], &sources, &EvalSettings::default());
        assert_eq!(report.mean("movement"), Some(1.0));
        assert_eq!(report.mean("consistency"), Some(1.0));
        assert!(report.mean("spatial").is_some());
        assert_eq!(report.mean("scale"), Some(1.0));

        let mut rev = rec;
        rev.expected_direction = Some(Direction::RightToLeft);
        let r = evaluate_prompts(&[rev.clone()], &sources, &EvalSettings::default());
        assert_eq!(r.mean("movement"), Some(0.0));
        let r = evaluate_prompts(&[rev], &EvalSources::default(), &EvalSettings::default());
        assert_eq!(r.per_item[0].details.as_deref(), Some("NO_DETECTION"));
    }
}
