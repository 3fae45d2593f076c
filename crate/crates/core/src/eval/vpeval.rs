use serde::{Deserialize, Serialize};

use crate::plan::{BoundingBox, VideoPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl LabeledBox {
    pub fn new(label: &str, bbox: BoundingBox) -> Self {
        Self {
            label: label.to_string(),
            bbox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialRelation {
    Left,
    Right,
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRelation {
    Bigger,
    Smaller,
    Same,
}

/// `bigger` needs area ratio above `bigger`; `same` needs each area within
/// `same` times the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleThresholds {
    pub bigger: f64,
    pub same: f64,
}

impl Default for ScaleThresholds {
    fn default() -> Self {
        Self { bigger: 1.2, same: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateResult {
    pub score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl PredicateResult {
    fn from_bool(ok: bool) -> Self {
        Self {
            score: u8::from(ok),
            reason: None,
        }
    }

    fn absent(label: &str) -> Self {
        Self {
            score: 0,
            reason: Some(format!("NO_DETECTION: {label:?}")),
        }
    }
}

/// A single layout-verifiable check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "skill", rename_all = "snake_case")]
pub enum VpevalQuery {
    Object { target: String },
    Count { target: String, k: usize },
    Spatial { a: String, relation: SpatialRelation, b: String },
    Scale { a: String, relation: ScaleRelation, b: String },
}

impl VpevalQuery {
    pub fn skill(&self) -> &'static str {
        match self {
            Self::Object { .. } => "object",
            Self::Count { .. } => "count",
            Self::Spatial { .. } => "spatial",
            Self::Scale { .. } => "scale",
        }
    }

    pub fn evaluate(&self, boxes: &[LabeledBox], thresholds: ScaleThresholds) -> PredicateResult {
        match self {
            Self::Object { target } => vpeval_object(boxes, target),
            Self::Count { target, k } => vpeval_count(boxes, target, *k),
            Self::Spatial { a, relation, b } => vpeval_spatial(boxes, a, *relation, b),
            Self::Scale { a, relation, b } => vpeval_scale(boxes, a, *relation, b, thresholds),
        }
    }
}

/// Largest box carrying `label`.
fn primary<'a>(boxes: &'a [LabeledBox], label: &str) -> Option<&'a LabeledBox> {
    boxes
        .iter()
        .filter(|b| b.label == label)
        .max_by(|x, y| x.bbox.area().total_cmp(&y.bbox.area()))
}

pub fn vpeval_object(boxes: &[LabeledBox], target: &str) -> PredicateResult {
    if boxes.iter().any(|b| b.label == target) {
        PredicateResult::from_bool(true)
    } else {
        PredicateResult::absent(target)
    }
}

pub fn vpeval_count(boxes: &[LabeledBox], target: &str, k: usize) -> PredicateResult {
    let n = boxes.iter().filter(|b| b.label == target).count();
    if n == 0 && k > 0 {
        return PredicateResult::absent(target);
    }
    PredicateResult::from_bool(n == k)
}

/// Dominant-axis rule on box centers, y downward.
pub fn vpeval_spatial(boxes: &[LabeledBox], a: &str, relation: SpatialRelation, b: &str) -> PredicateResult {
    let (Some(pa), Some(pb)) = (primary(boxes, a), primary(boxes, b)) else {
        return PredicateResult::absent(if primary(boxes, a).is_none() { a } else { b });
    };
    let (ax, ay) = pa.bbox.center();
    let (bx, by) = pb.bbox.center();
    let (dx, dy) = (bx - ax, by - ay);
    let horizontal = dx.abs() > dy.abs();
    let vertical = dy.abs() > dx.abs();
    PredicateResult::from_bool(match relation {
        SpatialRelation::Left => horizontal && dx > 0.0,
        SpatialRelation::Right => horizontal && dx < 0.0,
        SpatialRelation::Above => vertical && dy > 0.0,
        SpatialRelation::Below => vertical && dy < 0.0,
    })
}

pub fn vpeval_scale(
    boxes: &[LabeledBox],
    a: &str,
    relation: ScaleRelation,
    b: &str,
    t: ScaleThresholds,
) -> PredicateResult {
    let (Some(pa), Some(pb)) = (primary(boxes, a), primary(boxes, b)) else {
        return PredicateResult::absent(if primary(boxes, a).is_none() { a } else { b });
    };
    let (sa, sb) = (pa.bbox.area(), pb.bbox.area());
    PredicateResult::from_bool(match relation {
        ScaleRelation::Bigger => sa > t.bigger * sb,
        ScaleRelation::Smaller => sb > t.bigger * sa,
        ScaleRelation::Same => sa <= t.same * sb && sb <= t.same * sa,
    })
}

/// Labeled boxes of one keyframe of one scene of a plan.
pub fn plan_boxes(plan: &VideoPlan, scene: u32, keyframe: usize) -> Vec<LabeledBox> {
    plan.scene(scene)
        .map(|s| {
            s.entities
                .iter()
                .filter_map(|e| e.keyframes.get(keyframe).map(|k| LabeledBox::new(&e.name, k.bbox)))
                .collect()
        })
        .unwrap_or_default()
}
