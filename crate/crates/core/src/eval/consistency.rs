use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyDenominator {
    /// Mean over the N−1 adjacent pairs.
    #[default]
    Pairs,
    /// Sum over the N−1 pairs divided by N.
    Scenes,
}

/// Cosine similarity; 0 when either vector has zero norm. Bitwise-equal
/// inputs give exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Average cosine similarity of adjacent per-scene embeddings.
pub fn object_consistency(embeddings: &[Vec<f64>], denominator: ConsistencyDenominator) -> Result<f64, EvalError> {
    let n = embeddings.len();
    if n < 2 {
        return Err(EvalError::InsufficientScenes(n));
    }
    if let Some(w) = embeddings.windows(2).find(|w| w[0].len() != w[1].len()) {
        return Err(EvalError::Shape(format!(
            "embedding lengths differ: {} vs {}",
            w[0].len(),
            w[1].len()
        )));
    }
    let sum: f64 = embeddings.windows(2).map(|w| cosine(&w[0], &w[1])).sum();
    Ok(match denominator {
        ConsistencyDenominator::Pairs => sum / (n - 1) as f64,
        ConsistencyDenominator::Scenes => sum / n as f64,
    })
}
