use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::VideoPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    MissingKeyframes,
    BoxOutOfRange,
    EmptyFrame,
    UnknownGroupEntity,
    UnknownGroupScene,
    SceneIndexGap,
    DuplicateEntityId,
    KeyframeOrder,
    InvalidSceneShape,
    AlphaOutOfRange,
    GroupNotSorted,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MissingKeyframes => "MISSING_KEYFRAMES",
            Self::BoxOutOfRange => "BOX_OUT_OF_RANGE",
            Self::EmptyFrame => "EMPTY_FRAME",
            Self::UnknownGroupEntity => "UNKNOWN_GROUP_ENTITY",
            Self::UnknownGroupScene => "UNKNOWN_GROUP_SCENE",
            Self::SceneIndexGap => "SCENE_INDEX_GAP",
            Self::DuplicateEntityId => "DUPLICATE_ENTITY_ID",
            Self::KeyframeOrder => "KEYFRAME_ORDER",
            Self::InvalidSceneShape => "INVALID_SCENE_SHAPE",
            Self::AlphaOutOfRange => "ALPHA_OUT_OF_RANGE",
            Self::GroupNotSorted => "GROUP_NOT_SORTED",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn for_scene(&self, scene: u32) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.scene == Some(scene))
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(
        &mut self,
        code: ViolationCode,
        scene: Option<u32>,
        entity: Option<&str>,
        frame: Option<u32>,
        message: String,
    ) {
        self.0.push(Violation {
            code,
            scene,
            entity: entity.map(str::to_string),
            frame,
            message,
        });
    }
}

/// Checks every structural invariant of a (possibly partially filled) plan.
/// Violations are returned as data; the plan is valid iff none are found.
pub fn validate_plan(plan: &VideoPlan) -> ValidationReport {
    let mut out = Collector(Vec::new());

    if plan.scenes.is_empty() {
        out.push(
            ViolationCode::SceneIndexGap,
            None,
            None,
            None,
            "plan has no scenes".into(),
        );
    }

    for (pos, scene) in plan.scenes.iter().enumerate() {
        let expected = pos as u32 + 1;
        let s = Some(scene.index);
        if scene.index != expected {
            out.push(
                ViolationCode::SceneIndexGap,
                s,
                None,
                None,
                format!("scene at position {expected} has index {}", scene.index),
            );
        }
        if scene.num_keyframes < 2 || scene.target_frames < scene.num_keyframes {
            out.push(
                ViolationCode::InvalidSceneShape,
                s,
                None,
                None,
                format!(
                    "num_keyframes={} target_frames={} (need 2 <= num_keyframes <= target_frames)",
                    scene.num_keyframes, scene.target_frames
                ),
            );
        }
        if scene.entities.is_empty() {
            out.push(
                ViolationCode::EmptyFrame,
                s,
                None,
                None,
                "scene has no entities".into(),
            );
        }

        let mut seen_ids = HashSet::new();
        let mut occupied = BTreeSet::new();
        for entity in &scene.entities {
            let e = Some(entity.id.as_str());
            if !seen_ids.insert(entity.id.as_str()) {
                out.push(
                    ViolationCode::DuplicateEntityId,
                    s,
                    e,
                    None,
                    format!("entity id {:?} repeated", entity.id),
                );
            }
            if entity.keyframes.len() != scene.num_keyframes as usize {
                out.push(
                    ViolationCode::MissingKeyframes,
                    s,
                    e,
                    None,
                    format!(
                        "expected {} keyframes, found {}",
                        scene.num_keyframes,
                        entity.keyframes.len()
                    ),
                );
            }
            let mut prev: Option<u32> = None;
            for kf in &entity.keyframes {
                let f = Some(kf.frame);
                if prev.is_some_and(|p| kf.frame <= p) || kf.frame >= scene.num_keyframes {
                    out.push(
                        ViolationCode::KeyframeOrder,
                        s,
                        e,
                        f,
                        format!(
                            "keyframe index {} not strictly increasing within 0..{}",
                            kf.frame, scene.num_keyframes
                        ),
                    );
                }
                prev = Some(kf.frame);
                if !kf.bbox.is_valid() {
                    out.push(
                        ViolationCode::BoxOutOfRange,
                        s,
                        e,
                        f,
                        format!("box {:?} outside [0,1] or unordered", kf.bbox.to_array()),
                    );
                }
                occupied.insert(kf.frame);
            }
        }
        // Only meaningful once layouts exist; a step-1 scene has none yet.
        if !occupied.is_empty() {
            for frame in 0..scene.num_keyframes {
                if !occupied.contains(&frame) {
                    out.push(
                        ViolationCode::EmptyFrame,
                        s,
                        None,
                        Some(frame),
                        format!("keyframe {frame} has no boxes"),
                    );
                }
            }
        }
    }

    let known: HashSet<&str> = plan
        .scenes
        .iter()
        .flat_map(|s| {
            s.entities
                .iter()
                .map(|e| e.name.as_str())
                .chain(std::iter::once(s.background.as_str()))
        })
        .filter(|n| !n.is_empty())
        .collect();
    let n_scenes = plan.scenes.len() as u32;
    for (name, indices) in plan.consistency.iter() {
        if !known.contains(name.as_str()) {
            out.push(
                ViolationCode::UnknownGroupEntity,
                None,
                Some(name),
                None,
                format!("group {name:?} names no entity or background in the plan"),
            );
        }
        for &idx in indices {
            if idx == 0 || idx > n_scenes {
                out.push(
                    ViolationCode::UnknownGroupScene,
                    Some(idx),
                    Some(name),
                    None,
                    format!("group {name:?} references scene {idx} but plan has {n_scenes}"),
                );
            }
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            out.push(
                ViolationCode::GroupNotSorted,
                None,
                Some(name),
                None,
                format!("group {name:?} scene list {indices:?} is not strictly ascending"),
            );
        }
    }

    if !plan.alpha.is_in_range() {
        out.push(
            ViolationCode::AlphaOutOfRange,
            None,
            None,
            None,
            format!(
                "alpha {} outside [0, {}] for mode {:?}",
                plan.alpha.value,
                plan.alpha.max_value(),
                plan.alpha.mode
            ),
        );
    }

    let violations = out.0;
    ValidationReport {
        valid: violations.is_empty(),
        violations,
    }
}
