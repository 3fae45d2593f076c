use crate::plan::{BoundingBox, EntityTrack};

use super::LayoutError;

/// Dense boxes for one track plus anything worth telling the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    pub boxes: Vec<BoundingBox>,
    pub diagnostics: Vec<String>,
}

/// Expands a keyframe track to `target_frames` boxes.
///
/// The keyframe grid is taken to span `0..=last keyframe index`; use
/// [`interpolate_on_grid`] when the grid size is known (a scene's
/// `num_keyframes`).
pub fn interpolate_layouts(
    track: &EntityTrack,
    target_frames: usize,
) -> Result<Interpolation, LayoutError> {
    let grid = track
        .keyframes
        .last()
        .map(|k| k.frame as usize + 1)
        .ok_or_else(|| LayoutError::EmptyTrack(track.id.clone()))?;
    interpolate_on_grid(track, grid, target_frames)
}

/// Linear interpolation with endpoint-inclusive time remapping: keyframe
/// index `k` on a grid of `grid` slots lands on dense frame
/// `k * (target_frames - 1) / (grid - 1)`. Coordinates are blended
/// independently and are not re-quantized. Dense frames before the first or
/// after the last keyframe hold that keyframe's box.
pub fn interpolate_on_grid(
    track: &EntityTrack,
    grid: usize,
    target_frames: usize,
) -> Result<Interpolation, LayoutError> {
    let kfs = &track.keyframes;
    if kfs.is_empty() {
        return Err(LayoutError::EmptyTrack(track.id.clone()));
    }
    if kfs.windows(2).any(|w| w[0].frame >= w[1].frame) {
        return Err(LayoutError::UnorderedKeyframes(track.id.clone()));
    }
    if target_frames == 0 || target_frames < kfs.len() {
        return Err(LayoutError::TargetTooShort {
            target: target_frames,
            keyframes: kfs.len(),
        });
    }

    let mut diagnostics = Vec::new();
    if kfs.len() == 1 {
        diagnostics.push(format!(
            "track {:?} has a single keyframe; extended as a constant",
            track.id
        ));
        return Ok(Interpolation {
            boxes: vec![kfs[0].bbox; target_frames],
            diagnostics,
        });
    }
    let grid = grid.max(kfs.last().map(|k| k.frame as usize + 1).unwrap_or(0));
    if grid < 2 || target_frames < 2 {
        return Err(LayoutError::TargetTooShort {
            target: target_frames,
            keyframes: kfs.len(),
        });
    }

    let span = (grid - 1) as f64;
    let dense_span = (target_frames - 1) as f64;
    let mut boxes = Vec::with_capacity(target_frames);
    let mut seg = 0usize;
    for j in 0..target_frames {
        // position on the keyframe grid; the numerator is an exact integer
        let s = (j * (grid - 1)) as f64 / dense_span;
        debug_assert!(s <= span);
        let first = &kfs[0];
        let last = &kfs[kfs.len() - 1];
        let b = if s <= first.frame as f64 {
            first.bbox
        } else if s >= last.frame as f64 {
            last.bbox
        } else {
            while (kfs[seg + 1].frame as f64) < s {
                seg += 1;
            }
            let (a, z) = (&kfs[seg], &kfs[seg + 1]);
            let w = (s - a.frame as f64) / (z.frame - a.frame) as f64;
            blend(&a.bbox, &z.bbox, w)
        };
        boxes.push(b);
    }
    Ok(Interpolation { boxes, diagnostics })
}

/// `(1 - w) * a + w * b` per coordinate; exact at `w = 0` and `w = 1`.
pub fn blend(a: &BoundingBox, b: &BoundingBox, w: f64) -> BoundingBox {
    let l = |p: f64, q: f64| (1.0 - w) * p + w * q;
    BoundingBox::new(l(a.x0, b.x0), l(a.y0, b.y0), l(a.x1, b.x1), l(a.y1, b.y1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::Keyframe;
    use proptest::prelude::*;

    fn kf(frame: u32, c: [f64; 4]) -> Keyframe {
        Keyframe::new(frame, BoundingBox::from_array(c))
    }

    #[test]
    fn midpoint_of_two_keyframes() {
        let t = EntityTrack::new("a", "a", "").with_keyframes(vec![
            kf(0, [0.0, 0.0, 0.1, 0.1]),
            kf(8, [0.8, 0.0, 0.9, 0.1]),
        ]);
        let out = interpolate_layouts(&t, 9).unwrap();
        assert_eq!(out.boxes.len(), 9);
        assert!((out.boxes[4].x0 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn constant_track_stays_constant() {
        let c = [0.1, 0.2, 0.3, 0.4];
        let t = EntityTrack::new("a", "a", "").with_keyframes((0..9).map(|f| kf(f, c)).collect());
        let out = interpolate_layouts(&t, 16).unwrap();
        assert!(out.boxes.iter().all(|b| b.to_array() == c));
    }

    #[test]
    fn same_length_is_identity() {
        let t = EntityTrack::new("a", "a", "").with_keyframes(
            (0..9)
                .map(|f| kf(f, [0.05 * f as f64, 0.1, 0.5 + 0.05 * f as f64, 0.6]))
                .collect(),
        );
        let out = interpolate_on_grid(&t, 9, 9).unwrap();
        for (b, k) in out.boxes.iter().zip(&t.keyframes) {
            assert_eq!(*b, k.bbox);
        }
    }

    #[test]
    fn single_keyframe_extends_with_diagnostic() {
        let t = EntityTrack::new("a", "a", "").with_keyframes(vec![kf(0, [0.1, 0.1, 0.2, 0.2])]);
        let out = interpolate_layouts(&t, 16).unwrap();
        assert_eq!(out.boxes.len(), 16);
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn empty_and_short_targets_error() {
        let t = EntityTrack::new("a", "a", "");
        assert_eq!(interpolate_layouts(&t, 16).unwrap_err().code(), "EMPTY_TRACK");
        let t = t.with_keyframes((0..9).map(|f| kf(f, [0.0, 0.0, 1.0, 1.0])).collect());
        assert!(matches!(
            interpolate_layouts(&t, 4),
            Err(LayoutError::TargetTooShort { .. })
        ));
    }

    fn ordered_box() -> impl Strategy<Value = BoundingBox> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b, c, d)| {
            BoundingBox::new(a.min(b), c.min(d), a.max(b), c.max(d))
        })
    }

    proptest! {
        #[test]
        fn endpoints_order_and_monotonicity(boxes in prop::collection::vec(ordered_box(), 9), target in 9usize..40) {
            let t = EntityTrack::new("a", "a", "").with_keyframes(
                boxes.iter().enumerate().map(|(i, b)| Keyframe::new(i as u32, *b)).collect(),
            );
            let out = interpolate_on_grid(&t, 9, target).unwrap().boxes;
            prop_assert_eq!(out.len(), target);
            prop_assert_eq!(out[0], boxes[0]);
            prop_assert_eq!(out[target - 1], boxes[8]);
            for b in &out {
                prop_assert!(b.x0 <= b.x1 && b.y0 <= b.y1);
            }
            // each dense frame sits between the two keyframes bracketing it
            for (j, b) in out.iter().enumerate() {
                let s = (j * 8) as f64 / (target - 1) as f64;
                let lo = s.floor() as usize;
                let hi = s.ceil() as usize;
                for (c, (p, q)) in b.to_array().iter().zip(boxes[lo].to_array().iter().zip(boxes[hi].to_array().iter())) {
                    prop_assert!(*c >= p.min(*q) - 1e-15 && *c <= p.max(*q) + 1e-15);
                }
            }
        }
    }
}
