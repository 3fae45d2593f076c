use serde::{Deserialize, Serialize};

use super::PlanError;

/// Grid unit used by the planner: coordinates are multiples of 0.05 (20 bins).
pub const GRID_UNIT: f64 = 0.05;

/// Normalized `[x0, y0, x1, y1]` box. Coordinates are fractions of the frame
/// width/height and y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub const FULL: BoundingBox = BoundingBox {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// True when every coordinate lies in `[0, 1]` and both axes are ordered.
    pub fn is_valid(&self) -> bool {
        self.is_finite()
            && self.to_array().iter().all(|c| (0.0..=1.0).contains(c))
            && self.x0 <= self.x1
            && self.y0 <= self.y1
    }

    /// Clamps into the unit square and repairs inverted axes by collapsing
    /// them onto their midpoint.
    pub fn clamped(&self) -> Self {
        let (x0, x1) = ordered_pair(self.x0.clamp(0.0, 1.0), self.x1.clamp(0.0, 1.0));
        let (y0, y1) = ordered_pair(self.y0.clamp(0.0, 1.0), self.y1.clamp(0.0, 1.0));
        Self { x0, y0, x1, y1 }
    }

    pub fn center(&self) -> (f64, f64) {
        box_center(self)
    }

    pub fn area(&self) -> f64 {
        box_area(self)
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(c: [f64; 4]) -> Self {
        Self::from_array(c)
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

fn ordered_pair(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        let m = 0.5 * (a + b);
        (m, m)
    }
}

pub fn box_center(b: &BoundingBox) -> (f64, f64) {
    (0.5 * (b.x0 + b.x1), 0.5 * (b.y0 + b.y1))
}

pub fn box_area(b: &BoundingBox) -> f64 {
    b.width() * b.height()
}

/// Snaps a coordinate to the nearest multiple of `unit`, ties away from zero.
///
/// When `1/unit` is (numerically) an integer bin count the result is formed as
/// `k / bins`, which gives the correctly rounded decimal (0.35 rather than
/// 0.35000000000000003).
fn snap(c: f64, unit: f64) -> f64 {
    let bins = 1.0 / unit;
    if (bins - bins.round()).abs() < 1e-9 {
        let bins = bins.round();
        (c * bins).round() / bins
    } else {
        (c / unit).round() * unit
    }
}

/// Rounds each coordinate to the grid, clamps into `[0, 1]`, and repairs any
/// inverted axis by setting both ends to the grid-rounded mean of the input
/// pair (the box center is kept).
pub fn quantize_box(b: &BoundingBox, unit: f64) -> Result<BoundingBox, PlanError> {
    if !b.is_finite() {
        return Err(PlanError::InvalidCoordinate(b.to_array()));
    }
    if !(unit.is_finite() && unit > 0.0 && unit <= 1.0) {
        return Err(PlanError::InvalidCoordinate([unit; 4]));
    }
    let axis = |lo: f64, hi: f64| -> (f64, f64) {
        let a = snap(lo, unit).clamp(0.0, 1.0);
        let z = snap(hi, unit).clamp(0.0, 1.0);
        if a <= z {
            (a, z)
        } else {
            let m = snap(0.5 * (lo + hi), unit).clamp(0.0, 1.0);
            (m, m)
        }
    };
    let (x0, x1) = axis(b.x0, b.x1);
    let (y0, y1) = axis(b.y0, b.y1);
    Ok(BoundingBox { x0, y0, x1, y1 })
}

/// True when `c` is an integer multiple of `unit` within `tol`.
pub fn on_grid(c: f64, unit: f64, tol: f64) -> bool {
    let k = (c / unit).round();
    (c - k * unit).abs() <= tol
}
