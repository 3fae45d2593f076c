use ndarray::{concatenate, s, Array3, Axis};
use rand::Rng;

use crate::nn::{attention_bwd, attention_fwd, AttentionParams, AttnCache, Mat};
use crate::params::impl_parameters;
use crate::token::{token_matrix, GroundingToken};
use crate::{shape_err, GroundingError};

/// Attention over `[visual ‖ grounding]` added back through `tanh(gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedAttentionParams {
    pub attn: AttentionParams,
    pub gamma: f64,
}

impl_parameters!(GatedAttentionParams { attn, gamma });

impl GatedAttentionParams {
    /// Random projections with the gate closed.
    pub fn new(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            attn: AttentionParams::random(d, rng),
            gamma: 0.0,
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            attn: AttentionParams::zeros(d),
            gamma: 0.0,
        }
    }
}

/// Self-attention, gated grounding attention, then text cross-attention,
/// each with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Guided2dParams {
    pub self_attn: AttentionParams,
    pub gated: GatedAttentionParams,
    pub cross: AttentionParams,
}

impl_parameters!(Guided2dParams { self_attn, gated, cross });

impl Guided2dParams {
    pub fn new(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            self_attn: AttentionParams::random(d, rng),
            gated: GatedAttentionParams::new(d, rng),
            cross: AttentionParams::random(d, rng),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            self_attn: AttentionParams::zeros(d),
            gated: GatedAttentionParams::zeros(d),
            cross: AttentionParams::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.self_attn.dim()
    }

    fn check(&self) -> Result<(), GroundingError> {
        self.self_attn.check("self_attn")?;
        self.gated.attn.check("gated")?;
        self.cross.check("cross")?;
        if self.gated.attn.dim() != self.dim() || self.cross.dim() != self.dim() {
            return Err(shape_err("sub-block widths differ"));
        }
        if !self.gated.gamma.is_finite() {
            return Err(shape_err("gate is not finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guided2dGrads {
    pub params: Guided2dParams,
    pub d_input: Mat,
    pub d_grounding: Mat,
}

struct GatedCache {
    attn: AttnCache,
    branch: Mat,
    n_visual: usize,
}

pub(crate) struct BlockCache {
    self_attn: AttnCache,
    gated: Option<GatedCache>,
    cross: Option<AttnCache>,
}

fn gated_fwd(h: &Mat, g: &Mat, p: &GatedAttentionParams) -> (Mat, GatedCache) {
    let kv = concatenate(Axis(0), &[h.view(), g.view()]).expect("same width");
    let (branch, attn) = attention_fwd(h, &kv, &p.attn);
    let gate = p.gamma.tanh();
    let out = if gate == 0.0 { h.clone() } else { h + &(&branch * gate) };
    (
        out,
        GatedCache {
            attn,
            branch,
            n_visual: h.nrows(),
        },
    )
}

/// `grounding = None` bypasses the gated branch entirely; an empty matrix
/// still runs it over the visual tokens alone.
pub(crate) fn block_fwd(x: &Mat, grounding: Option<&Mat>, text: Option<&Mat>, p: &Guided2dParams) -> (Mat, BlockCache) {
    let (sa, self_cache) = attention_fwd(x, x, &p.self_attn);
    let h1 = x + &sa;
    let (h2, gated) = match grounding {
        Some(g) => {
            let (h2, c) = gated_fwd(&h1, g, &p.gated);
            (h2, Some(c))
        }
        None => (h1, None),
    };
    let (h3, cross) = match text {
        Some(t) if t.nrows() > 0 => {
            let (ca, c) = attention_fwd(&h2, t, &p.cross);
            (&h2 + &ca, Some(c))
        }
        _ => (h2, None),
    };
    (
        h3,
        BlockCache {
            self_attn: self_cache,
            gated,
            cross,
        },
    )
}

pub(crate) fn block_bwd(cache: &BlockCache, p: &Guided2dParams, d_out: &Mat, n_grounding: usize) -> Guided2dGrads {
    let d = p.dim();
    let mut grads = Guided2dParams::zeros(d);
    let mut d_h2 = d_out.clone();
    if let Some(c) = &cache.cross {
        let g = attention_bwd(c, &p.cross, d_out);
        d_h2 += &g.d_q_in;
        grads.cross = g.params;
    }
    let mut d_grounding = Mat::zeros((n_grounding, d));
    let d_h1 = match &cache.gated {
        Some(c) => {
            let gate = p.gated.gamma.tanh();
            grads.gated.gamma = (1.0 - gate * gate) * (&d_h2 * &c.branch).sum();
            let g = attention_bwd(&c.attn, &p.gated.attn, &(&d_h2 * gate));
            grads.gated.attn = g.params;
            d_grounding.assign(&g.d_kv.slice(s![c.n_visual.., ..]));
            d_h2 + &g.d_q_in + &g.d_kv.slice(s![..c.n_visual, ..])
        }
        None => d_h2,
    };
    let g = attention_bwd(&cache.self_attn, &p.self_attn, &d_h1);
    grads.self_attn = g.params;
    Guided2dGrads {
        d_input: d_h1 + &g.d_q_in + &g.d_kv,
        params: grads,
        d_grounding,
    }
}

fn check_tokens(visual: &Mat, d: usize) -> Result<(), GroundingError> {
    if visual.ncols() != d {
        return Err(shape_err(format!("visual tokens have width {}, model width is {d}", visual.ncols())));
    }
    if visual.nrows() == 0 {
        return Err(shape_err("no visual tokens"));
    }
    Ok(())
}

/// `visual + tanh(gamma) * VisualPart(SelfAttention([visual ‖ grounding]))`.
/// With a closed gate the visual tokens are returned unchanged.
pub fn gated_self_attention(
    visual: &Mat,
    grounding: &[GroundingToken],
    params: &GatedAttentionParams,
) -> Result<Mat, GroundingError> {
    params.attn.check("gated")?;
    let d = params.attn.dim();
    check_tokens(visual, d)?;
    let g = token_matrix(grounding, d)?;
    if params.gamma.tanh() == 0.0 {
        return Ok(visual.clone());
    }
    Ok(gated_fwd(visual, &g, params).0)
}

fn flatten_grid(grid: &Array3<f64>) -> Mat {
    let (h, w, d) = grid.dim();
    grid.as_standard_layout().to_owned().into_shape_with_order((h * w, d)).expect("contiguous")
}

fn prepare(
    grid: &Array3<f64>,
    grounding: &[GroundingToken],
    text: &Mat,
    p: &Guided2dParams,
) -> Result<(Mat, Mat), GroundingError> {
    p.check()?;
    let d = p.dim();
    let x = flatten_grid(grid);
    check_tokens(&x, d)?;
    if text.nrows() > 0 && text.ncols() != d {
        return Err(shape_err(format!("text tokens have width {}, model width is {d}", text.ncols())));
    }
    Ok((x, token_matrix(grounding, d)?))
}

/// Guided 2D attention over an `(H, W, D_h)` grid of visual tokens. An
/// empty `text` skips the cross-attention.
pub fn guided_2d_attention(
    grid: &Array3<f64>,
    grounding: &[GroundingToken],
    text: &Mat,
    params: &Guided2dParams,
) -> Result<Array3<f64>, GroundingError> {
    let (x, g) = prepare(grid, grounding, text, params)?;
    let (out, _) = block_fwd(&x, Some(&g), Some(text), params);
    Ok(out.into_shape_with_order(grid.dim()).expect("same size"))
}

/// Gradients of `<d_out, guided_2d_attention(..)>` with respect to the
/// parameters, the visual grid (flattened row-major) and the grounding
/// tokens.
pub fn guided_2d_attention_grad(
    grid: &Array3<f64>,
    grounding: &[GroundingToken],
    text: &Mat,
    params: &Guided2dParams,
    d_out: &Array3<f64>,
) -> Result<Guided2dGrads, GroundingError> {
    let (x, g) = prepare(grid, grounding, text, params)?;
    if d_out.dim() != grid.dim() {
        return Err(shape_err("upstream gradient shape differs from the grid"));
    }
    let (_, cache) = block_fwd(&x, Some(&g), Some(text), params);
    Ok(block_bwd(&cache, params, &flatten_grid(d_out), g.nrows()))
}
