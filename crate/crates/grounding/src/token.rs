use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use vdgpt_core::layout::{fourier_features, DEFAULT_FOURIER_BANDS};
use vdgpt_core::plan::BoundingBox;

use crate::embedding::{EmbeddingKind, EmbeddingVector};
use crate::nn::{gaussian, gelu, gelu_grad, Mat, Vector};
use crate::params::{impl_parameters, Parameters};
use crate::{shape_err, GroundingError, D_E, D_H, D_P};

/// Which embedding slots feed the grounding MLP; the others are zeroed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingVariant {
    ImageOnly,
    TextOnly,
    #[default]
    ImageText,
}

impl EmbeddingVariant {
    fn uses_image(self) -> bool {
        self != Self::TextOnly
    }

    fn uses_text(self) -> bool {
        self != Self::ImageOnly
    }
}

/// `h = W2 gelu(W1 [P_img img; P_text txt; fourier] + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingMlpParams {
    pub p_img: Mat,
    pub p_text: Mat,
    pub w1: Mat,
    pub b1: Vector,
    pub w2: Mat,
    pub b2: Vector,
    pub fourier_bands: usize,
}

impl_parameters!(GroundingMlpParams { p_img, p_text, w1, b1, w2, b2 });

impl GroundingMlpParams {
    pub fn zeros(d_e: usize, d_p: usize, hidden: usize, d_h: usize, fourier_bands: usize) -> Self {
        let d_in = 2 * d_p + 8 * fourier_bands;
        Self {
            p_img: Mat::zeros((d_e, d_p)),
            p_text: Mat::zeros((d_e, d_p)),
            w1: Mat::zeros((d_in, hidden)),
            b1: Vector::zeros(hidden),
            w2: Mat::zeros((hidden, d_h)),
            b2: Vector::zeros(d_h),
            fourier_bands,
        }
    }

    /// Gaussian weights with fan-in scaling, zero biases.
    pub fn random(d_e: usize, d_p: usize, hidden: usize, d_h: usize, fourier_bands: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(d_e, d_p, hidden, d_h, fourier_bands);
        let d_in = p.w1.nrows();
        p.p_img = gaussian(d_e, d_p, 1.0, rng);
        p.p_text = gaussian(d_e, d_p, 1.0, rng);
        p.w1 = gaussian(d_in, hidden, 1.0 / (d_in as f64).sqrt(), rng);
        p.w2 = gaussian(hidden, d_h, 1.0 / (hidden as f64).sqrt(), rng);
        p
    }

    /// Desk-scale shapes: D_e = 32, D_p = 16, hidden 64, D_h = 32, 8 bands.
    pub fn desk(rng: &mut impl Rng) -> Self {
        Self::random(D_E, D_P, 2 * D_H, D_H, DEFAULT_FOURIER_BANDS, rng)
    }

    pub fn embed_dim(&self) -> usize {
        self.p_img.nrows()
    }

    pub fn token_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        let (d_e, d_p) = self.p_img.dim();
        Self::zeros(d_e, d_p, self.w1.ncols(), self.w2.ncols(), self.fourier_bands)
    }

    fn check(&self) -> Result<(), GroundingError> {
        let (d_e, d_p) = self.p_img.dim();
        let hidden = self.w1.ncols();
        let ok = self.p_text.dim() == (d_e, d_p)
            && self.w1.nrows() == 2 * d_p + 8 * self.fourier_bands
            && self.b1.len() == hidden
            && self.w2.nrows() == hidden
            && self.b2.len() == self.w2.ncols();
        if !ok {
            return Err(shape_err("grounding MLP parameter shapes are inconsistent"));
        }
        if !self.all_finite() {
            return Err(shape_err("grounding MLP parameters are not finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSource {
    pub image_projection: Vec<f64>,
    pub text_projection: Vec<f64>,
    pub fourier: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingToken {
    pub vector: Vec<f64>,
    pub entity_id: String,
    pub source: TokenSource,
}

pub(crate) struct TokenCache {
    img: Vector,
    txt: Vector,
    input: Vector,
    pre: Vector,
    variant: EmbeddingVariant,
}

fn check_inputs(img: &EmbeddingVector, txt: &EmbeddingVector, p: &GroundingMlpParams) -> Result<(), GroundingError> {
    p.check()?;
    if img.kind != EmbeddingKind::Image || txt.kind != EmbeddingKind::Text {
        return Err(shape_err("expected an image embedding and a text embedding"));
    }
    for e in [img, txt] {
        if e.dim() != p.embed_dim() {
            return Err(shape_err(format!("embedding dimension {} != {}", e.dim(), p.embed_dim())));
        }
        if !e.is_finite() {
            return Err(shape_err("embedding is not finite"));
        }
    }
    Ok(())
}

pub(crate) fn token_fwd(
    img: &[f64],
    txt: &[f64],
    fourier: &[f64],
    p: &GroundingMlpParams,
    variant: EmbeddingVariant,
) -> (Vector, Vector, Vector, TokenCache) {
    let d_p = p.p_img.ncols();
    let img = Array1::from(img.to_vec());
    let txt = Array1::from(txt.to_vec());
    let pi = if variant.uses_image() {
        img.dot(&p.p_img)
    } else {
        Vector::zeros(d_p)
    };
    let pt = if variant.uses_text() {
        txt.dot(&p.p_text)
    } else {
        Vector::zeros(d_p)
    };
    let mut input = Vector::zeros(2 * d_p + fourier.len());
    input.slice_mut(s![..d_p]).assign(&pi);
    input.slice_mut(s![d_p..2 * d_p]).assign(&pt);
    input.slice_mut(s![2 * d_p..]).assign(&Array1::from(fourier.to_vec()));
    let pre = input.dot(&p.w1) + &p.b1;
    let out = pre.mapv(gelu).dot(&p.w2) + &p.b2;
    (
        out,
        pi,
        pt,
        TokenCache {
            img,
            txt,
            input,
            pre,
            variant,
        },
    )
}

fn outer(a: &Vector, b: &Vector) -> Mat {
    a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
}

/// Accumulates the gradient of `<d_out, token>` into `grads`.
pub(crate) fn token_bwd(cache: &TokenCache, p: &GroundingMlpParams, d_out: &Vector, grads: &mut GroundingMlpParams) {
    let d_p = p.p_img.ncols();
    let act = cache.pre.mapv(gelu);
    grads.w2 += &outer(&act, d_out);
    grads.b2 += d_out;
    let d_pre = p.w2.dot(d_out) * cache.pre.mapv(gelu_grad);
    grads.w1 += &outer(&cache.input, &d_pre);
    grads.b1 += &d_pre;
    let d_in = p.w1.dot(&d_pre);
    if cache.variant.uses_image() {
        grads.p_img += &outer(&cache.img, &d_in.slice(s![..d_p]).to_owned());
    }
    if cache.variant.uses_text() {
        grads.p_text += &outer(&cache.txt, &d_in.slice(s![d_p..2 * d_p]).to_owned());
    }
}

/// Grounding token for one entity box with both embedding slots active.
pub fn grounding_token(
    img: &EmbeddingVector,
    txt: &EmbeddingVector,
    bbox: &BoundingBox,
    params: &GroundingMlpParams,
) -> Result<GroundingToken, GroundingError> {
    grounding_token_variant(img, txt, bbox, params, EmbeddingVariant::ImageText)
}

pub fn grounding_token_variant(
    img: &EmbeddingVector,
    txt: &EmbeddingVector,
    bbox: &BoundingBox,
    params: &GroundingMlpParams,
    variant: EmbeddingVariant,
) -> Result<GroundingToken, GroundingError> {
    check_inputs(img, txt, params)?;
    let fourier = fourier_features(bbox, params.fourier_bands).0;
    let (out, pi, pt, _) = token_fwd(&img.values, &txt.values, &fourier, params, variant);
    Ok(GroundingToken {
        vector: out.to_vec(),
        entity_id: String::new(),
        source: TokenSource {
            image_projection: pi.to_vec(),
            text_projection: pt.to_vec(),
            fourier,
        },
    })
}

/// Gradient of `<d_out, token>` with respect to every MLP parameter.
pub fn grounding_token_grad(
    img: &EmbeddingVector,
    txt: &EmbeddingVector,
    bbox: &BoundingBox,
    params: &GroundingMlpParams,
    variant: EmbeddingVariant,
    d_out: &[f64],
) -> Result<GroundingMlpParams, GroundingError> {
    check_inputs(img, txt, params)?;
    if d_out.len() != params.token_dim() {
        return Err(shape_err("upstream gradient has the wrong width"));
    }
    let fourier = fourier_features(bbox, params.fourier_bands).0;
    let (_, _, _, cache) = token_fwd(&img.values, &txt.values, &fourier, params, variant);
    let mut grads = params.zeros_like();
    token_bwd(&cache, params, &Array1::from(d_out.to_vec()), &mut grads);
    Ok(grads)
}

/// Stacks token vectors as rows.
pub(crate) fn token_matrix(tokens: &[GroundingToken], d: usize) -> Result<Mat, GroundingError> {
    let mut m = Array2::zeros((tokens.len(), d));
    for (i, t) in tokens.iter().enumerate() {
        if t.vector.len() != d {
            return Err(shape_err(format!(
                "grounding token {:?} has width {}, expected {d}",
                t.entity_id,
                t.vector.len()
            )));
        }
        m.row_mut(i).assign(&Array1::from(t.vector.clone()));
    }
    Ok(m)
}
