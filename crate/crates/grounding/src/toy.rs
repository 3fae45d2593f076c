use ndarray::{Array1, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vdgpt_core::layout::fourier_features;
use vdgpt_core::plan::BoundingBox;

use crate::attention::{block_bwd, block_fwd, BlockCache, GatedAttentionParams, Guided2dParams};
use crate::embedding::{EmbeddingProvider, HashEmbeddingProvider, ImageHandle};
use crate::latent::LatentGrid;
use crate::nn::{gaussian, AttentionParams, Mat};
use crate::params::{impl_parameters, Parameters};
use crate::sampler::Denoiser;
use crate::schedule::{forward_diffuse, DenoiseSchedule};
use crate::token::{token_bwd, token_fwd, EmbeddingVariant, GroundingMlpParams, TokenCache};
use crate::{shape_err, GroundingError, D_E, D_H, D_P};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    /// `(frames, channels, height, width)`.
    pub latent_shape: (usize, usize, usize, usize),
    pub d_e: usize,
    pub d_p: usize,
    pub hidden: usize,
    pub d_h: usize,
    pub fourier_bands: usize,
    pub time_bands: usize,
    pub diffusion_steps: usize,
    pub learning_rate: f64,
    pub eval_examples: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            latent_shape: LatentGrid::DESK_SHAPE,
            d_e: D_E,
            d_p: D_P,
            hidden: 2 * D_H,
            d_h: D_H,
            fourier_bands: 8,
            time_bands: 8,
            diffusion_steps: 50,
            learning_rate: 0.05,
            eval_examples: 32,
        }
    }
}

/// Backbone weights that training never touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyFrozen {
    pub w_in: Mat,
    pub w_pos: Mat,
    pub w_time: Mat,
    pub w_text: Mat,
    pub self_attn: AttentionParams,
    pub cross: AttentionParams,
    pub w_out: Mat,
}

impl_parameters!(ToyFrozen { w_in, w_pos, w_time, w_text, self_attn, cross, w_out });

/// The grounding MLP and the gated attention: the only trained weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrainable {
    pub grounding: GroundingMlpParams,
    pub gated: GatedAttentionParams,
}

impl_parameters!(ToyTrainable { grounding, gated });

impl ToyTrainable {
    fn zeros_like(&self) -> Self {
        Self {
            grounding: self.grounding.zeros_like(),
            gated: GatedAttentionParams::zeros(self.gated.attn.dim()),
        }
    }
}

/// Per-frame latent denoiser: latent pixels become tokens (input projection
/// plus cell-position and timestep embeddings), pass one guided 2D attention
/// block, and are read out as a noise prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub schedule: DenoiseSchedule,
    pub frozen: ToyFrozen,
    pub trainable: ToyTrainable,
}

impl_parameters!(ToyModel { frozen, trainable });

/// One training example: entity embeddings, per-frame boxes, clean latent.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExample {
    pub names: Vec<String>,
    pub img: Vec<Vec<f64>>,
    pub txt: Vec<Vec<f64>>,
    /// `boxes[entity][frame]`.
    pub boxes: Vec<Vec<BoundingBox>>,
    pub z0: LatentGrid,
}

/// Synthetic task: two entities drawn from a small pool, each a solid
/// rectangle of the entity's colour moving linearly across the frames.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub config: ToyConfig,
    pub pool: Vec<String>,
    provider: HashEmbeddingProvider,
}

const POOL: [&str; 4] = ["red ball", "blue cube", "green cone", "yellow star"];

impl ToyDataset {
    pub fn new(config: ToyConfig, seed: u64) -> Self {
        Self {
            config,
            pool: POOL.iter().map(|s| s.to_string()).collect(),
            provider: HashEmbeddingProvider::new(config.d_e, seed),
        }
    }

    pub fn provider(&self) -> &HashEmbeddingProvider {
        &self.provider
    }

    /// Latent colour of an entity, derived from a hashed pseudo image.
    pub fn color(&self, name: &str) -> Vec<f64> {
        let c = self.config.latent_shape.1;
        let scale = (self.config.d_e as f64).sqrt();
        self.provider.embed_image_crop(&ImageHandle(name.to_string())).values[..c]
            .iter()
            .map(|v| v * scale)
            .collect()
    }

    pub fn embeddings(&self, name: &str) -> (Vec<f64>, Vec<f64>) {
        let txt = self.provider.embed_text(name);
        let img = self.provider.prior_text_to_image(&txt).expect("text embedding of provider width");
        (img.values, txt.values)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ToyExample {
        let (frames, _, h, w) = self.config.latent_shape;
        let picks = sample_indices(rng, self.pool.len(), 2).into_vec();
        let mut ex = ToyExample {
            names: Vec::new(),
            img: Vec::new(),
            txt: Vec::new(),
            boxes: Vec::new(),
            z0: LatentGrid::zeros(self.config.latent_shape),
        };
        for idx in picks {
            let name = self.pool[idx].clone();
            let bw = rng.random_range(2..=(w / 2).max(2));
            let bh = rng.random_range(2..=(h / 2).max(2));
            let (sx, sy) = (rng.random_range(0..=w - bw), rng.random_range(0..=h - bh));
            let (ex_, ey) = (rng.random_range(0..=w - bw), rng.random_range(0..=h - bh));
            let color = self.color(&name);
            let mut track = Vec::with_capacity(frames);
            for f in 0..frames {
                let s = if frames > 1 { f as f64 / (frames - 1) as f64 } else { 0.0 };
                let x0 = (sx as f64 + (ex_ as f64 - sx as f64) * s).round() as usize;
                let y0 = (sy as f64 + (ey as f64 - sy as f64) * s).round() as usize;
                track.push(BoundingBox::new(
                    x0 as f64 / w as f64,
                    y0 as f64 / h as f64,
                    (x0 + bw) as f64 / w as f64,
                    (y0 + bh) as f64 / h as f64,
                ));
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        for (ch, c) in color.iter().enumerate() {
                            ex.z0.data[[f, ch, y, x]] = *c;
                        }
                    }
                }
            }
            let (img, txt) = self.embeddings(&name);
            ex.names.push(name);
            ex.img.push(img);
            ex.txt.push(txt);
            ex.boxes.push(track);
        }
        ex
    }
}

struct FrameCache {
    block: BlockCache,
    tokens: Vec<TokenCache>,
}

fn time_features(t: usize, bands: usize) -> Array1<f64> {
    let mut out = Array1::zeros(2 * bands);
    for i in 0..bands {
        let freq = (-(1000f64.ln()) * i as f64 / bands as f64).exp();
        out[i] = (t as f64 * freq).sin();
        out[bands + i] = (t as f64 * freq).cos();
    }
    out
}

impl ToyModel {
    pub fn new(config: ToyConfig, seed: u64) -> Result<Self, GroundingError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, c, _, _) = config.latent_shape;
        let d = config.d_h;
        let pos_in = 8 * config.fourier_bands;
        let inv = |n: usize| 1.0 / (n as f64).sqrt();
        let frozen = ToyFrozen {
            w_in: gaussian(c, d, inv(c), &mut rng),
            w_pos: gaussian(pos_in, d, inv(pos_in), &mut rng),
            w_time: gaussian(2 * config.time_bands, d, inv(2 * config.time_bands), &mut rng),
            w_text: gaussian(config.d_e, d, inv(config.d_e), &mut rng),
            self_attn: AttentionParams::random(d, &mut rng),
            cross: AttentionParams::random(d, &mut rng),
            w_out: gaussian(d, c, inv(d), &mut rng),
        };
        let trainable = ToyTrainable {
            grounding: GroundingMlpParams::random(config.d_e, config.d_p, config.hidden, d, config.fourier_bands, &mut rng),
            gated: GatedAttentionParams::new(d, &mut rng),
        };
        Ok(Self {
            config,
            schedule: DenoiseSchedule::linear(config.diffusion_steps)?,
            frozen,
            trainable,
        })
    }

    /// `(trainable, total)` parameter counts.
    pub fn parameter_split(&self) -> (usize, usize) {
        let t = self.trainable.param_count();
        (t, t + self.frozen.param_count())
    }

    fn block(&self) -> Guided2dParams {
        Guided2dParams {
            self_attn: self.frozen.self_attn.clone(),
            gated: self.trainable.gated.clone(),
            cross: self.frozen.cross.clone(),
        }
    }

    fn positions(&self) -> Mat {
        let (_, _, h, w) = self.config.latent_shape;
        let bands = self.config.fourier_bands;
        let mut m = Mat::zeros((h * w, 8 * bands));
        for p in 0..h * w {
            let (y, x) = ((p / w) as f64, (p % w) as f64);
            let b = BoundingBox::new(x / w as f64, y / h as f64, (x + 1.0) / w as f64, (y + 1.0) / h as f64);
            m.row_mut(p).assign(&Array1::from(fourier_features(&b, bands).0));
        }
        m.dot(&self.frozen.w_pos)
    }

    fn text_tokens(&self, txt: &[Vec<f64>]) -> Mat {
        let mut m = Mat::zeros((txt.len(), self.config.d_e));
        for (i, t) in txt.iter().enumerate() {
            m.row_mut(i).assign(&Array1::from(t.clone()));
        }
        m.dot(&self.frozen.w_text)
    }

    fn check_example(&self, ex: &ToyExample) -> Result<(), GroundingError> {
        let frames = self.config.latent_shape.0;
        let n = ex.names.len();
        if ex.img.len() != n || ex.txt.len() != n || ex.boxes.len() != n {
            return Err(shape_err("example fields disagree on the entity count"));
        }
        if ex.boxes.iter().any(|b| b.len() != frames) {
            return Err(shape_err(format!("each entity needs {frames} boxes")));
        }
        if ex.img.iter().chain(&ex.txt).any(|e| e.len() != self.config.d_e) {
            return Err(shape_err("embedding width differs from the model"));
        }
        Ok(())
    }

    /// Noise prediction for every frame, optionally keeping backprop state.
    fn forward(
        &self,
        z: &LatentGrid,
        t: usize,
        cond: Option<&ToyExample>,
        text: &Mat,
        keep: bool,
    ) -> Result<(LatentGrid, Vec<FrameCache>), GroundingError> {
        if z.shape() != self.config.latent_shape {
            return Err(shape_err(format!(
                "latent shape {:?}, model expects {:?}",
                z.shape(),
                self.config.latent_shape
            )));
        }
        let block = self.block();
        let base = self.positions() + &time_features(t, self.config.time_bands).dot(&self.frozen.w_time);
        let mut eps = LatentGrid::zeros(z.shape());
        let mut caches = Vec::new();
        for f in 0..z.frames() {
            let x = z.frame_tokens(f).dot(&self.frozen.w_in) + &base;
            let mut token_caches = Vec::new();
            let g = cond.map(|ex| {
                let mut g = Mat::zeros((ex.names.len(), self.config.d_h));
                for i in 0..ex.names.len() {
                    let fourier = fourier_features(&ex.boxes[i][f], self.config.fourier_bands).0;
                    let (v, _, _, c) = token_fwd(
                        &ex.img[i],
                        &ex.txt[i],
                        &fourier,
                        &self.trainable.grounding,
                        EmbeddingVariant::ImageText,
                    );
                    g.row_mut(i).assign(&v);
                    token_caches.push(c);
                }
                g
            });
            let (h, cache) = block_fwd(&x, g.as_ref(), Some(text), &block);
            eps.set_frame_tokens(f, &h.dot(&self.frozen.w_out));
            if keep {
                caches.push(FrameCache {
                    block: cache,
                    tokens: token_caches,
                });
            }
        }
        Ok((eps, caches))
    }

    /// Noise prediction with grounding tokens from `cond` when given.
    pub fn predict_noise(&self, z: &LatentGrid, t: usize, cond: Option<&ToyExample>, text: &[Vec<f64>]) -> Result<LatentGrid, GroundingError> {
        if let Some(ex) = cond {
            self.check_example(ex)?;
        }
        Ok(self.forward(z, t, cond, &self.text_tokens(text), false)?.0)
    }

    /// Mean squared error between `noise` and the prediction at `z_t`.
    pub fn loss(&self, ex: &ToyExample, t: usize, noise: &LatentGrid) -> Result<f64, GroundingError> {
        self.check_example(ex)?;
        let zt = forward_diffuse(&ex.z0, t, &self.schedule, noise)?;
        let (eps, _) = self.forward(&zt, t, Some(ex), &self.text_tokens(&ex.txt), false)?;
        Ok(eps.combine(1.0, noise, -1.0).mean_square())
    }

    /// Loss and its gradient with respect to the trainable parameters.
    pub fn loss_and_grad(&self, ex: &ToyExample, t: usize, noise: &LatentGrid) -> Result<(f64, ToyTrainable), GroundingError> {
        self.check_example(ex)?;
        let zt = forward_diffuse(&ex.z0, t, &self.schedule, noise)?;
        let (eps, caches) = self.forward(&zt, t, Some(ex), &self.text_tokens(&ex.txt), true)?;
        let diff = eps.combine(1.0, noise, -1.0);
        let loss = diff.mean_square();
        let scale = 2.0 / diff.data.len() as f64;
        let block = self.block();
        let mut grads = self.trainable.zeros_like();
        for (f, cache) in caches.iter().enumerate() {
            let d_eps = diff.frame_tokens(f) * scale;
            let d_h = d_eps.dot(&self.frozen.w_out.t());
            let bg = block_bwd(&cache.block, &block, &d_h, cache.tokens.len());
            grads.gated.accumulate(&bg.params.gated);
            for (c, row) in cache.tokens.iter().zip(bg.d_grounding.axis_iter(Axis(0))) {
                token_bwd(c, &self.trainable.grounding, &row.to_owned(), &mut grads.grounding);
            }
        }
        Ok((loss, grads))
    }
}

/// Samples a denoising problem: the example, a step in `1..=T`, and noise.
fn draw(dataset: &ToyDataset, model: &ToyModel, rng: &mut impl Rng) -> (ToyExample, usize, LatentGrid) {
    let ex = dataset.sample(rng);
    let t = rng.random_range(1..=model.schedule.steps);
    let noise = LatentGrid::standard_normal(model.config.latent_shape, rng);
    (ex, t, noise)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training-batch loss before each update.
    pub loss_trace: Vec<f64>,
    /// Mean loss on a fixed held-out set before and after training.
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub trainable_params: usize,
    pub total_params: usize,
}

impl TrainReport {
    pub fn trainable_fraction(&self) -> f64 {
        self.trainable_params as f64 / self.total_params as f64
    }
}

fn eval_loss(model: &ToyModel, set: &[(ToyExample, usize, LatentGrid)]) -> Result<f64, GroundingError> {
    let mut sum = 0.0;
    for (ex, t, n) in set {
        sum += model.loss(ex, *t, n)?;
    }
    Ok(sum / set.len().max(1) as f64)
}

/// Plain SGD, one example per step, on the trainable parameters only.
pub fn train_toy(model: &mut ToyModel, dataset: &ToyDataset, steps: usize, seed: u64) -> Result<TrainReport, GroundingError> {
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
    let eval_set: Vec<_> = (0..model.config.eval_examples)
        .map(|_| draw(dataset, model, &mut eval_rng))
        .collect();
    let initial_eval_loss = eval_loss(model, &eval_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let (ex, t, noise) = draw(dataset, model, &mut rng);
        let (loss, grads) = model.loss_and_grad(&ex, t, &noise)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(GroundingError::TrainingDiverged { step });
        }
        trace.push(loss);
        model.trainable.sgd_step(&grads, model.config.learning_rate);
    }
    let (trainable_params, total_params) = model.parameter_split();
    Ok(TrainReport {
        loss_trace: trace,
        initial_eval_loss,
        final_eval_loss: eval_loss(model, &eval_set)?,
        trainable_params,
        total_params,
    })
}

/// A toy model bound to one scene's conditioning, for the samplers.
pub struct ToyDenoiser<'a> {
    pub model: &'a ToyModel,
    /// Entities and boxes; `None` runs without grounding tokens.
    pub grounding: Option<&'a ToyExample>,
    pub text: Vec<Vec<f64>>,
}

impl Denoiser for ToyDenoiser<'_> {
    fn predict_noise(&self, z: &LatentGrid, t: usize, guided: bool) -> Result<LatentGrid, GroundingError> {
        let cond = if guided { self.grounding } else { None };
        self.model.predict_noise(z, t, cond, &self.text)
    }

    fn has_grounding(&self) -> bool {
        self.grounding.is_some()
    }
}
