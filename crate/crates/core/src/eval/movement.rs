use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layout::{densify_plan, Direction};
use crate::plan::VideoPlan;

use super::{DetectorProvider, Detection, FrameRef, LayoutOracleDetector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementScore {
    pub score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Center displacement along the judged axis, when both detections exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// 1 iff the center moved by more than `epsilon` in `direction` between the
/// two detections (y grows downward). A missing detection scores 0.
pub fn movement_direction_score(
    first: Option<&Detection>,
    last: Option<&Detection>,
    direction: Direction,
    epsilon: f64,
) -> MovementScore {
    let (Some(a), Some(b)) = (first, last) else {
        return MovementScore {
            score: 0,
            reason: Some("NO_DETECTION".to_string()),
            delta: None,
        };
    };
    let (ax, ay) = a.bbox.center();
    let (bx, by) = b.bbox.center();
    let raw = if direction.is_horizontal() { bx - ax } else { by - ay };
    let delta = raw * direction.sign();
    MovementScore {
        score: u8::from(delta > epsilon),
        reason: None,
        delta: Some(raw),
    }
}

/// Highest score wins; ties go to the larger box.
pub fn pick_detection(dets: &[Detection]) -> Option<&Detection> {
    dets.iter().max_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.bbox.area().total_cmp(&b.bbox.area()))
    })
}

/// Scores `label` between the first and last frame of `scene`.
pub fn score_movement(
    provider: &dyn DetectorProvider,
    scene: u32,
    label: &str,
    direction: Direction,
    epsilon: f64,
) -> MovementScore {
    let Some(n) = provider.frame_count(scene).filter(|n| *n > 0) else {
        return MovementScore {
            score: 0,
            reason: Some("NO_DETECTION".to_string()),
            delta: None,
        };
    };
    let first = provider.detect(FrameRef { scene, frame: 0 }, label);
    let last = provider.detect(FrameRef { scene, frame: n - 1 }, label);
    movement_direction_score(pick_detection(&first), pick_detection(&last), direction, epsilon)
}

/// Closed-loop movement score of a plan: the plan's own dense layout is the
/// "video". The target defaults to the first entity of the first scene and
/// the first scene containing it is judged.
pub fn movement_for_plan(
    plan: &VideoPlan,
    target: Option<&str>,
    direction: Direction,
    epsilon: f64,
) -> MovementScore {
    let label = target
        .map(str::to_string)
        .or_else(|| plan.scenes.first().and_then(|s| s.entities.first()).map(|e| e.name.clone()));
    let Some(label) = label else {
        return MovementScore {
            score: 0,
            reason: Some("NO_DETECTION".to_string()),
            delta: None,
        };
    };
    let scene = plan
        .scenes
        .iter()
        .find(|s| s.entities.iter().any(|e| e.name == label || e.id == label))
        .map(|s| s.index)
        .unwrap_or(1);
    match densify_plan(plan, None) {
        Ok(doc) => score_movement(&LayoutOracleDetector::new(&doc), scene, &label, direction, epsilon),
        Err(e) => MovementScore {
            score: 0,
            reason: Some(format!("NO_DETECTION: {e}")),
            delta: None,
        },
    }
}

/// Accuracy of a random-guess mover against balanced labels: each trial
/// starts at a uniform position and moves a uniform distance along one of
/// the four directions chosen uniformly at random.
pub fn random_direction_baseline(trials: usize, seed: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for i in 0..trials {
        let label = Direction::ALL[i % 4];
        let guess = Direction::ALL[rng.random_range(0..4)];
        let (cx, cy) = (rng.random_range(0.3..0.7), rng.random_range(0.3..0.7));
        let dist: f64 = rng.random_range(0.05..0.25);
        let (dx, dy) = if guess.is_horizontal() {
            (dist * guess.sign(), 0.0)
        } else {
            (0.0, dist * guess.sign())
        };
        let det = |x: f64, y: f64| Detection {
            label: "object".into(),
            bbox: crate::plan::BoundingBox::new(x - 0.05, y - 0.05, x + 0.05, y + 0.05),
            score: 1.0,
        };
        let s = movement_direction_score(Some(&det(cx, cy)), Some(&det(cx + dx, cy + dy)), label, 0.0);
        hits += s.score as usize;
    }
    hits as f64 / trials as f64
}
