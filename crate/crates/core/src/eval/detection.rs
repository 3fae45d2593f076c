use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::layout::{DenseLayout, DenseLayoutDoc};
use crate::plan::BoundingBox;

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Addresses one frame of one scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRef {
    pub scene: u32,
    pub frame: usize,
}

pub trait DetectorProvider: Send + Sync {
    fn detect(&self, frame: FrameRef, label: &str) -> Vec<Detection>;

    /// Number of frames available for `scene`, if the scene exists.
    fn frame_count(&self, scene: u32) -> Option<usize>;
}

/// Echoes the plan's own boxes as detections with score 1. A label matches
/// an entity's name or id.
#[derive(Debug, Clone)]
pub struct LayoutOracleDetector {
    scenes: BTreeMap<u32, DenseLayout>,
}

impl LayoutOracleDetector {
    pub fn new(doc: &DenseLayoutDoc) -> Self {
        Self {
            scenes: doc.scenes.iter().map(|s| (s.scene, s.clone())).collect(),
        }
    }

    pub fn from_scene(dense: DenseLayout) -> Self {
        Self {
            scenes: BTreeMap::from([(dense.scene, dense)]),
        }
    }
}

pub fn layout_oracle_detector(doc: &DenseLayoutDoc) -> LayoutOracleDetector {
    LayoutOracleDetector::new(doc)
}

impl DetectorProvider for LayoutOracleDetector {
    fn detect(&self, frame: FrameRef, label: &str) -> Vec<Detection> {
        let Some(entries) = self.scenes.get(&frame.scene).and_then(|s| s.frame(frame.frame)) else {
            return Vec::new();
        };
        entries
            .iter()
            .filter(|e| e.name == label || e.id == label)
            .map(|e| Detection {
                label: label.to_string(),
                bbox: e.bbox,
                score: 1.0,
            })
            .collect()
    }

    fn frame_count(&self, scene: u32) -> Option<usize> {
        self.scenes.get(&scene).map(|s| s.frames.len())
    }
}

/// One line of a detection exchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub prompt_id: String,
    pub scene: u32,
    pub frame: usize,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Detections produced offline by an external detector for one prompt.
#[derive(Debug, Clone, Default)]
pub struct RecordedDetections {
    frames: BTreeMap<FrameRef, Vec<Detection>>,
    counts: BTreeMap<u32, usize>,
}

impl RecordedDetections {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a DetectionRecord>) -> Self {
        let mut out = Self::default();
        for r in records {
            let key = FrameRef {
                scene: r.scene,
                frame: r.frame,
            };
            out.frames.entry(key).or_default().push(Detection {
                label: r.label.clone(),
                bbox: r.bbox,
                score: r.score,
            });
            let c = out.counts.entry(r.scene).or_insert(0);
            *c = (*c).max(r.frame + 1);
        }
        out
    }
}

impl DetectorProvider for RecordedDetections {
    fn detect(&self, frame: FrameRef, label: &str) -> Vec<Detection> {
        self.frames
            .get(&frame)
            .map(|d| d.iter().filter(|d| d.label == label).cloned().collect())
            .unwrap_or_default()
    }

    fn frame_count(&self, scene: u32) -> Option<usize> {
        self.counts.get(&scene).copied()
    }
}

pub fn read_detection_file(path: &Path) -> Result<Vec<DetectionRecord>, EvalError> {
    read_jsonl(path)
}

pub fn write_detection_file(path: &Path, records: &[DetectionRecord]) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| EvalError::Io(e.to_string()))?;
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", path.display()));
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::densify_plan;
    use crate::plan::testutil::sample_plan;

    #[test]
    fn oracle_echoes_boxes() {
        let plan = sample_plan();
        let doc = densify_plan(&plan, None).unwrap();
        let oracle = layout_oracle_detector(&doc);
        let d = oracle.detect(FrameRef { scene: 1, frame: 0 }, "oven");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bbox, plan.scenes[0].entities[1].keyframes[0].bbox);
        assert_eq!(d[0].score, 1.0);
        assert!(oracle.detect(FrameRef { scene: 1, frame: 0 }, "pear").is_empty());
        assert!(oracle.detect(FrameRef { scene: 9, frame: 0 }, "oven").is_empty());
        assert_eq!(oracle.frame_count(1), Some(16));
    }

    #[test]
    fn exchange_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.jsonl");
        let recs = vec![
            DetectionRecord {
                prompt_id: "p1".into(),
                scene: 1,
                frame: 0,
                label: "glass".into(),
                bbox: BoundingBox::new(0.1, 0.1, 0.2, 0.2),
                score: 0.9,
            },
            DetectionRecord {
                prompt_id: "p1".into(),
                scene: 1,
                frame: 15,
                label: "glass".into(),
                bbox: BoundingBox::new(0.6, 0.1, 0.7, 0.2),
                score: 0.8,
            },
        ];
        write_detection_file(&path, &recs).unwrap();
        let back = read_detection_file(&path).unwrap();
        assert_eq!(back, recs);
        let det = RecordedDetections::from_records(&back);
        assert_eq!(det.frame_count(1), Some(16));
        assert_eq!(det.detect(FrameRef { scene: 1, frame: 15 }, "glass").len(), 1);
    }
}
