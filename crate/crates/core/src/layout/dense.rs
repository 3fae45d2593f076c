use serde::{Deserialize, Serialize};

use crate::plan::{box_center, BoundingBox, VideoPlan};

use super::{interpolate_on_grid, LayoutError};

pub const DENSE_SCHEMA: &str = "vdgpt-dense/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEntry {
    pub id: String,
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// Per-frame boxes for one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayout {
    pub scene: u32,
    pub frame_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps_hint: Option<f64>,
    pub frames: Vec<Vec<DenseEntry>>,
}

impl DenseLayout {
    pub fn frame(&self, index: usize) -> Option<&[DenseEntry]> {
        self.frames.get(index).map(Vec::as_slice)
    }

    /// Boxes of the entity with this id across all frames.
    pub fn track(&self, id: &str) -> Vec<BoundingBox> {
        self.frames
            .iter()
            .filter_map(|f| f.iter().find(|e| e.id == id).map(|e| e.bbox))
            .collect()
    }
}

/// Dense layouts for a whole plan; the exchange format for detectors and
/// the editor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayoutDoc {
    pub schema: String,
    pub source_prompt: String,
    pub scenes: Vec<DenseLayout>,
}

/// Interpolates every entity of every scene. `frames` overrides each scene's
/// `target_frames`.
pub fn densify_plan(plan: &VideoPlan, frames: Option<usize>) -> Result<DenseLayoutDoc, LayoutError> {
    let mut scenes = Vec::with_capacity(plan.scenes.len());
    for scene in &plan.scenes {
        let target = frames.unwrap_or(scene.target_frames as usize);
        let mut per_entity = Vec::with_capacity(scene.entities.len());
        for e in &scene.entities {
            let interp = interpolate_on_grid(e, scene.num_keyframes as usize, target).map_err(|err| {
                LayoutError::InScene {
                    scene: scene.index,
                    source: Box::new(err),
                }
            })?;
            per_entity.push(interp.boxes);
        }
        let frames = (0..target)
            .map(|j| {
                scene
                    .entities
                    .iter()
                    .zip(&per_entity)
                    .map(|(e, boxes)| DenseEntry {
                        id: e.id.clone(),
                        name: e.name.clone(),
                        bbox: boxes[j],
                    })
                    .collect()
            })
            .collect();
        scenes.push(DenseLayout {
            scene: scene.index,
            frame_count: target as u32,
            fps_hint: None,
            frames,
        });
    }
    Ok(DenseLayoutDoc {
        schema: DENSE_SCHEMA.to_string(),
        source_prompt: plan.source_prompt.clone(),
        scenes,
    })
}

/// Replaces every box with the zero-area box at its center.
pub fn to_center_point_layout(dense: &DenseLayout) -> DenseLayout {
    let mut out = dense.clone();
    for entry in out.frames.iter_mut().flatten() {
        let (cx, cy) = box_center(&entry.bbox);
        entry.bbox = BoundingBox::new(cx, cy, cx, cy);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testutil::sample_plan;

    #[test]
    fn densify_produces_target_frames() {
        let doc = densify_plan(&sample_plan(), None).unwrap();
        assert_eq!(doc.scenes.len(), 4);
        assert_eq!(doc.scenes[0].frame_count, 16);
        assert_eq!(doc.scenes[0].frames.len(), 16);
        assert_eq!(doc.scenes[0].frames[0].len(), 2);
        assert_eq!(doc.scenes[1].frames[15].len(), 1);
    }

    #[test]
    fn densify_to_keyframe_count_is_identity() {
        let plan = sample_plan();
        let doc = densify_plan(&plan, Some(9)).unwrap();
        let chef = doc.scenes[0].track("chef");
        let kfs: Vec<_> = plan.scenes[0].entities[0].keyframes.iter().map(|k| k.bbox).collect();
        assert_eq!(chef, kfs);
    }

    #[test]
    fn empty_entity_reports_scene() {
        let mut plan = sample_plan();
        plan.scenes[2].entities[0].keyframes.clear();
        match densify_plan(&plan, None).unwrap_err() {
            LayoutError::InScene { scene, .. } => assert_eq!(scene, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn center_point_layout() {
        let doc = densify_plan(&sample_plan(), None).unwrap();
        let dense = &doc.scenes[0];
        let cp = to_center_point_layout(dense);
        for (a, b) in dense.frames.iter().flatten().zip(cp.frames.iter().flatten()) {
            assert_eq!(a.id, b.id);
            assert_eq!(b.bbox.area(), 0.0);
            assert_eq!(a.bbox.center(), b.bbox.center());
        }
        assert_eq!(to_center_point_layout(&cp), cp);
    }
}
