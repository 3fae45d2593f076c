//! Numerical layout-control path at desk scale.
//!
//! Entities become grounding tokens `h = MLP(P_img f_img, P_text f_text, Fourier(box))`,
//! which condition a gated self-attention inside the guided 2D attention
//! block. A small latent diffusion toolkit (linear schedule, DDIM and PLMS
//! samplers, a toy denoiser with hand-written backprop) drives that block
//! for the first `round(alpha * N)` reverse steps.

mod attention;
mod checkpoint;
mod embedding;
mod latent;
mod nn;
mod params;
mod sampler;
mod scene;
mod schedule;
mod token;
mod toy;

use thiserror::Error;

pub use attention::{
    gated_self_attention, guided_2d_attention, guided_2d_attention_grad, Guided2dGrads, Guided2dParams,
    GatedAttentionParams,
};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use embedding::{EmbeddingKind, EmbeddingProvider, EmbeddingVector, HashEmbeddingProvider, ImageHandle};
pub use latent::LatentGrid;
pub use nn::{attention, AttentionParams, Mat, Vector};
pub use params::{NamedTensor, Parameters};
pub use sampler::{denoise_sample, Denoiser, OracleDenoiser, SampleOutput, SamplerKind};
pub use scene::{embedding_key, scene_example, tokens_for_scene, EmbeddingCache, SceneTokens};
pub use schedule::{forward_diffuse, forward_diffuse_stepwise, DenoiseSchedule};
pub use token::{
    grounding_token, grounding_token_grad, grounding_token_variant, EmbeddingVariant, GroundingMlpParams,
    GroundingToken, TokenSource,
};
pub use toy::{
    train_toy, ToyConfig, ToyDataset, ToyDenoiser, ToyExample, ToyFrozen, ToyModel, ToyTrainable, TrainReport,
};

/// Desk-scale embedding width.
pub const D_E: usize = 32;
/// Width of each projected embedding slot.
pub const D_P: usize = 16;
/// Model (token) width.
pub const D_H: usize = 32;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("step {step} outside 1..={max}")]
    Step { step: usize, max: usize },
    #[error("loss became non-finite at step {step}")]
    TrainingDiverged { step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Layout(#[from] vdgpt_core::layout::LayoutError),
    #[error("scene {0} not in plan")]
    UnknownScene(u32),
}

impl GroundingError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Shape(_) => "SHAPE_ERROR",
            Self::Step { .. } => "STEP_ERROR",
            Self::TrainingDiverged { .. } => "TRAINING_DIVERGED",
            Self::Checkpoint(_) => "CHECKPOINT_ERROR",
            Self::Layout(e) => e.code(),
            Self::UnknownScene(_) => "UNKNOWN_SCENE",
        }
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> GroundingError {
    GroundingError::Shape(msg.into())
}
