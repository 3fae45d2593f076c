use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BoundingBox;

/// Schema tag written into every plan document.
pub const PLAN_SCHEMA: &str = "vdgpt-plan/1";

pub const DEFAULT_NUM_KEYFRAMES: u32 = 9;
pub const DEFAULT_TARGET_FRAMES: u32 = 16;

/// Upper bound for an LLM-chosen guidance ratio.
pub const DYNAMIC_ALPHA_MAX: f64 = 0.3;
pub const DEFAULT_ALPHA: f64 = 0.1;

/// One keyframe of an entity track, serialized as `[frame, x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u32, f64, f64, f64, f64)", into = "(u32, f64, f64, f64, f64)")]
pub struct Keyframe {
    pub frame: u32,
    pub bbox: BoundingBox,
}

impl Keyframe {
    pub fn new(frame: u32, bbox: BoundingBox) -> Self {
        Self { frame, bbox }
    }
}

impl From<(u32, f64, f64, f64, f64)> for Keyframe {
    fn from((frame, x0, y0, x1, y1): (u32, f64, f64, f64, f64)) -> Self {
        Self {
            frame,
            bbox: BoundingBox::new(x0, y0, x1, y1),
        }
    }
}

impl From<Keyframe> for (u32, f64, f64, f64, f64) {
    fn from(k: Keyframe) -> Self {
        (k.frame, k.bbox.x0, k.bbox.y0, k.bbox.x1, k.bbox.y1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityTrack {
    /// Stable key, unique within its scene.
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub keyframes: Vec<Keyframe>,
}

impl EntityTrack {
    pub fn new(id: impl Into<String>, name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            description: description.into(),
            keyframes: Vec::new(),
        }
    }

    pub fn with_keyframes(mut self, keyframes: Vec<Keyframe>) -> Self {
        self.keyframes = keyframes;
        self
    }
}

fn default_num_keyframes() -> u32 {
    DEFAULT_NUM_KEYFRAMES
}

fn default_target_frames() -> u32 {
    DEFAULT_TARGET_FRAMES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// 1-based position of the scene in the plan.
    pub index: u32,
    pub description: String,
    #[serde(default)]
    pub background: String,
    #[serde(default)]
    pub entities: Vec<EntityTrack>,
    #[serde(default = "default_num_keyframes")]
    pub num_keyframes: u32,
    #[serde(default = "default_target_frames")]
    pub target_frames: u32,
}

impl SceneSpec {
    pub fn new(index: u32, description: impl Into<String>, background: impl Into<String>) -> Self {
        Self {
            index,
            description: description.into(),
            background: background.into(),
            entities: Vec::new(),
            num_keyframes: DEFAULT_NUM_KEYFRAMES,
            target_frames: DEFAULT_TARGET_FRAMES,
        }
    }

    pub fn entity(&self, id: &str) -> Option<&EntityTrack> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// Every entity carries exactly `num_keyframes` boxes.
    pub fn is_layout_complete(&self) -> bool {
        !self.entities.is_empty()
            && self
                .entities
                .iter()
                .all(|e| e.keyframes.len() == self.num_keyframes as usize)
    }
}

/// Name (entity or background) → sorted scene indices where it must stay
/// visually consistent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConsistencyGroups(pub BTreeMap<String, Vec<u32>>);

impl ConsistencyGroups {
    pub fn get(&self, name: &str) -> Option<&[u32]> {
        self.0.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<u32>)> {
        self.0.iter()
    }
}

impl<const N: usize> From<[(&str, Vec<u32>); N]> for ConsistencyGroups {
    fn from(pairs: [(&str, Vec<u32>); N]) -> Self {
        Self(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Static,
    LlmDynamic,
}

/// Fraction of reverse-diffusion steps that run with layout guidance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSetting {
    pub mode: AlphaMode,
    pub value: f64,
}

impl AlphaSetting {
    pub fn fixed(value: f64) -> Self {
        Self {
            mode: AlphaMode::Static,
            value,
        }
    }

    pub fn dynamic(value: f64) -> Self {
        Self {
            mode: AlphaMode::LlmDynamic,
            value,
        }
    }

    pub fn max_value(&self) -> f64 {
        match self.mode {
            AlphaMode::Static => 1.0,
            AlphaMode::LlmDynamic => DYNAMIC_ALPHA_MAX,
        }
    }

    pub fn is_in_range(&self) -> bool {
        self.value.is_finite() && (0.0..=self.max_value()).contains(&self.value)
    }

    /// Number of guided steps out of `total`: `round(alpha * total)`.
    pub fn guided_steps(&self, total: usize) -> usize {
        guided_step_count(self.value, total)
    }
}

impl Default for AlphaSetting {
    fn default() -> Self {
        Self::fixed(DEFAULT_ALPHA)
    }
}

/// `round(alpha * total)` clamped to `[0, total]`, ties away from zero.
pub fn guided_step_count(alpha: f64, total: usize) -> usize {
    if !alpha.is_finite() || alpha <= 0.0 {
        return 0;
    }
    ((alpha * total as f64).round() as usize).min(total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    /// `step1`, `step2` or `alpha`.
    pub step: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<u32>,
    pub attempt: u32,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default)]
    pub responses: Vec<ProvenanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPlan {
    pub schema: String,
    pub source_prompt: String,
    pub scenes: Vec<SceneSpec>,
    #[serde(default)]
    pub consistency: ConsistencyGroups,
    #[serde(default)]
    pub alpha: AlphaSetting,
    #[serde(default)]
    pub provenance: Provenance,
}

impl VideoPlan {
    pub fn new(source_prompt: impl Into<String>, scenes: Vec<SceneSpec>) -> Self {
        Self {
            schema: PLAN_SCHEMA.to_string(),
            source_prompt: source_prompt.into(),
            scenes,
            consistency: ConsistencyGroups::default(),
            alpha: AlphaSetting::default(),
            provenance: Provenance::default(),
        }
    }

    pub fn scene(&self, index: u32) -> Option<&SceneSpec> {
        self.scenes.iter().find(|s| s.index == index)
    }

    pub fn scene_count(&self) -> usize {
        self.scenes.len()
    }
}
