use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::plan::BoundingBox;

pub const DEFAULT_FOURIER_BANDS: usize = 8;

/// Sinusoidal box encoding of length `8 * bands`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FourierFeature(pub Vec<f64>);

impl FourierFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Band count this feature was built with.
    pub fn bands(&self) -> usize {
        self.0.len() / 8
    }
}

/// For each coordinate `c` of `[x0, y0, x1, y1]` and band `j` in `0..bands`,
/// emits `sin(2^j * pi * c)` then `cos(2^j * pi * c)`. Coordinate-major,
/// band-minor.
pub fn fourier_features(b: &BoundingBox, bands: usize) -> FourierFeature {
    let mut out = Vec::with_capacity(8 * bands);
    for c in b.to_array() {
        for j in 0..bands {
            let arg = (1u64 << j) as f64 * PI * c;
            out.push(arg.sin());
            out.push(arg.cos());
        }
    }
    FourierFeature(out)
}
