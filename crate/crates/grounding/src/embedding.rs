use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{shape_err, GroundingError, D_E};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub kind: EmbeddingKind,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, kind: EmbeddingKind) -> Self {
        Self { values, kind }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Opaque reference to an image crop. The default provider only hashes it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageHandle(pub String);

/// Text and image encoders plus the text-to-image prior. Implementations
/// must be deterministic.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> EmbeddingVector;
    fn embed_image_crop(&self, image: &ImageHandle) -> EmbeddingVector;
    fn prior_text_to_image(&self, text: &EmbeddingVector) -> Result<EmbeddingVector, GroundingError>;
}

/// Seeded pseudo-embeddings: SHA-256 of `(seed, domain, input)` seeds a
/// Gaussian draw that is normalized to the unit sphere. The prior is a
/// fixed seeded orthogonal matrix.
#[derive(Debug, Clone)]
pub struct HashEmbeddingProvider {
    dim: usize,
    seed: u64,
    prior: Array2<f64>,
}

impl HashEmbeddingProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5052_494f_525f_4d41);
        let prior = random_orthogonal(dim, &mut rng);
        Self { dim, seed, prior }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn unit_vector(&self, domain: &str, input: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(domain.as_bytes());
        h.update([0u8]);
        h.update(input.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

impl Default for HashEmbeddingProvider {
    fn default() -> Self {
        Self::new(D_E, 0)
    }
}

impl EmbeddingProvider for HashEmbeddingProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> EmbeddingVector {
        EmbeddingVector::new(self.unit_vector("text", text), EmbeddingKind::Text)
    }

    fn embed_image_crop(&self, image: &ImageHandle) -> EmbeddingVector {
        EmbeddingVector::new(self.unit_vector("image", &image.0), EmbeddingKind::Image)
    }

    fn prior_text_to_image(&self, text: &EmbeddingVector) -> Result<EmbeddingVector, GroundingError> {
        if text.kind != EmbeddingKind::Text {
            return Err(shape_err("prior expects a text embedding"));
        }
        if text.dim() != self.dim {
            return Err(shape_err(format!("prior expects dimension {}, got {}", self.dim, text.dim())));
        }
        let v = self.prior.dot(&Array1::from(text.values.clone()));
        Ok(EmbeddingVector::new(v.to_vec(), EmbeddingKind::Image))
    }
}

/// Gram-Schmidt on a Gaussian matrix; columns are orthonormal.
fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= d * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| cols[j][i])
}
