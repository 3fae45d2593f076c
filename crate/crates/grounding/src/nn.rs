use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::params::impl_parameters;
use crate::{shape_err, GroundingError};

pub type Mat = Array2<f64>;
pub type Vector = Array1<f64>;

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

pub(crate) fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Mat {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Row-wise numerically stable softmax.
pub(crate) fn softmax_rows(s: &Mat) -> Mat {
    let mut out = s.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row /= z;
    }
    out
}

/// Single-head projections; tokens are rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
}

impl_parameters!(AttentionParams { wq, wk, wv, wo });

impl AttentionParams {
    pub fn zeros(d: usize) -> Self {
        let z = Mat::zeros((d, d));
        Self {
            wq: z.clone(),
            wk: z.clone(),
            wv: z.clone(),
            wo: z,
        }
    }

    /// Gaussian entries with standard deviation `1/sqrt(d)`.
    pub fn random(d: usize, rng: &mut impl Rng) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        Self {
            wq: gaussian(d, d, s, rng),
            wk: gaussian(d, d, s, rng),
            wv: gaussian(d, d, s, rng),
            wo: gaussian(d, d, s, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.nrows()
    }

    pub(crate) fn check(&self, what: &str) -> Result<(), GroundingError> {
        let d = self.dim();
        for (n, m) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if m.dim() != (d, d) {
                return Err(shape_err(format!("{what}.{n} is {:?}, expected ({d}, {d})", m.dim())));
            }
        }
        Ok(())
    }
}

pub(crate) struct AttnCache {
    q_in: Mat,
    kv: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    a: Mat,
    c: Mat,
}

pub(crate) struct AttnGrads {
    pub params: AttentionParams,
    pub d_q_in: Mat,
    pub d_kv: Mat,
}

pub(crate) fn attention_fwd(q_in: &Mat, kv: &Mat, p: &AttentionParams) -> (Mat, AttnCache) {
    let scale = 1.0 / (p.dim() as f64).sqrt();
    let q = q_in.dot(&p.wq);
    let k = kv.dot(&p.wk);
    let v = kv.dot(&p.wv);
    let a = softmax_rows(&(q.dot(&k.t()) * scale));
    let c = a.dot(&v);
    let out = c.dot(&p.wo);
    let cache = AttnCache {
        q_in: q_in.clone(),
        kv: kv.clone(),
        q,
        k,
        v,
        a,
        c,
    };
    (out, cache)
}

pub(crate) fn attention_bwd(cache: &AttnCache, p: &AttentionParams, d_out: &Mat) -> AttnGrads {
    let scale = 1.0 / (p.dim() as f64).sqrt();
    let d_wo = cache.c.t().dot(d_out);
    let d_c = d_out.dot(&p.wo.t());
    let d_a = d_c.dot(&cache.v.t());
    let d_v = cache.a.t().dot(&d_c);
    let row_dot = (&d_a * &cache.a).sum_axis(Axis(1)).insert_axis(Axis(1));
    let d_s = &cache.a * &(&d_a - &row_dot);
    let d_q = d_s.dot(&cache.k) * scale;
    let d_k = d_s.t().dot(&cache.q) * scale;
    AttnGrads {
        params: AttentionParams {
            wq: cache.q_in.t().dot(&d_q),
            wk: cache.kv.t().dot(&d_k),
            wv: cache.kv.t().dot(&d_v),
            wo: d_wo,
        },
        d_q_in: d_q.dot(&p.wq.t()),
        d_kv: d_k.dot(&p.wk.t()) + d_v.dot(&p.wv.t()),
    }
}

/// Scaled dot-product attention: queries from `q_in`, keys and values from
/// `kv`, followed by the output projection.
pub fn attention(q_in: &Mat, kv: &Mat, p: &AttentionParams) -> Result<Mat, GroundingError> {
    p.check("attention")?;
    let d = p.dim();
    if q_in.ncols() != d || kv.ncols() != d {
        return Err(shape_err(format!(
            "token widths {} and {} do not match model width {d}",
            q_in.ncols(),
            kv.ncols()
        )));
    }
    if kv.nrows() == 0 {
        return Err(shape_err("attention over an empty key set"));
    }
    Ok(attention_fwd(q_in, kv, p).0)
}
