use ndarray::{s, Array2, Array4, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::Mat;
use crate::{shape_err, GroundingError};

/// Latent video tensor of shape `(frames, channels, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    pub data: Array4<f64>,
}

impl LatentGrid {
    pub const DESK_SHAPE: (usize, usize, usize, usize) = (4, 4, 8, 8);

    pub fn zeros(shape: (usize, usize, usize, usize)) -> Self {
        Self {
            data: Array4::zeros(shape),
        }
    }

    pub fn standard_normal(shape: (usize, usize, usize, usize), rng: &mut impl Rng) -> Self {
        Self {
            data: Array4::from_shape_simple_fn(shape, || rng.sample(StandardNormal)),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &LatentGrid) -> Result<(), GroundingError> {
        if self.shape() != other.shape() {
            return Err(shape_err(format!("latent shapes {:?} and {:?} differ", self.shape(), other.shape())));
        }
        Ok(())
    }

    /// Frame `f` as `H*W` tokens (row-major over positions) of width `C`.
    pub fn frame_tokens(&self, f: usize) -> Mat {
        let (_, c, h, w) = self.shape();
        let frame = self.data.slice(s![f, .., .., ..]);
        Array2::from_shape_fn((h * w, c), |(p, ch)| frame[[ch, p / w, p % w]])
    }

    pub fn set_frame_tokens(&mut self, f: usize, tokens: &Mat) {
        let (_, c, h, w) = self.shape();
        assert_eq!(tokens.dim(), (h * w, c), "token matrix shape");
        for p in 0..h * w {
            for ch in 0..c {
                self.data[[f, ch, p / w, p % w]] = tokens[[p, ch]];
            }
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &LatentGrid, b: f64) -> LatentGrid {
        LatentGrid {
            data: Zip::from(&self.data).and(&other.data).map_collect(|x, y| a * x + b * y),
        }
    }

    pub fn max_abs_diff(&self, other: &LatentGrid) -> f64 {
        Zip::from(&self.data)
            .and(&other.data)
            .fold(0.0, |m, a, b| f64::max(m, (a - b).abs()))
    }

    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }
}
