use std::collections::BTreeMap;

use vdgpt_core::layout::densify_plan;
use vdgpt_core::plan::{EntityTrack, VideoPlan};

use crate::embedding::{EmbeddingProvider, EmbeddingVector};
use crate::latent::LatentGrid;
use crate::token::{grounding_token_variant, EmbeddingVariant, GroundingMlpParams, GroundingToken};
use crate::toy::ToyExample;
use crate::GroundingError;

/// Image and text embeddings per identity key, computed on first use.
/// The image embedding comes from the text embedding through the prior.
pub struct EmbeddingCache<'a> {
    provider: &'a dyn EmbeddingProvider,
    entries: BTreeMap<String, (EmbeddingVector, EmbeddingVector)>,
    computed: usize,
}

impl<'a> EmbeddingCache<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider) -> Self {
        Self {
            provider,
            entries: BTreeMap::new(),
            computed: 0,
        }
    }

    /// Number of provider round-trips so far.
    pub fn computed(&self) -> usize {
        self.computed
    }

    pub fn get(&self, key: &str) -> Option<&(EmbeddingVector, EmbeddingVector)> {
        self.entries.get(key)
    }

    pub fn get_or_compute(&mut self, key: &str, text: &str) -> Result<(EmbeddingVector, EmbeddingVector), GroundingError> {
        if let Some(e) = self.entries.get(key) {
            return Ok(e.clone());
        }
        let txt = self.provider.embed_text(text);
        let img = self.provider.prior_text_to_image(&txt)?;
        self.computed += 1;
        self.entries.insert(key.to_string(), (img.clone(), txt.clone()));
        Ok((img, txt))
    }
}

/// Identity key and embedding text for an entity in a scene. Members of a
/// consistency group share the key of the group, so every scene of the
/// group reads the same cached embeddings.
pub fn embedding_key(plan: &VideoPlan, scene: u32, entity: &EntityTrack) -> (String, String) {
    let grouped = plan
        .consistency
        .get(&entity.name)
        .is_some_and(|scenes| scenes.contains(&scene));
    if grouped {
        (format!("group:{}", entity.name), entity.name.clone())
    } else if entity.description.is_empty() {
        (format!("scene{scene}:{}", entity.id), entity.name.clone())
    } else {
        (
            format!("scene{scene}:{}", entity.id),
            format!("{}, {}", entity.name, entity.description),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTokens {
    pub scene: u32,
    /// One token per entity present in each dense frame.
    pub frames: Vec<Vec<GroundingToken>>,
}

/// Grounding tokens for every dense frame of one scene. `frames` overrides
/// the scene's target frame count.
pub fn tokens_for_scene(
    plan: &VideoPlan,
    scene_index: u32,
    cache: &mut EmbeddingCache<'_>,
    params: &GroundingMlpParams,
    variant: EmbeddingVariant,
    frames: Option<usize>,
) -> Result<SceneTokens, GroundingError> {
    let scene = plan
        .scenes
        .iter()
        .find(|s| s.index == scene_index)
        .ok_or(GroundingError::UnknownScene(scene_index))?;
    let dense = densify_plan(plan, frames)?;
    let layout = dense
        .scenes
        .iter()
        .find(|s| s.scene == scene_index)
        .ok_or(GroundingError::UnknownScene(scene_index))?;
    let mut out = Vec::with_capacity(layout.frames.len());
    for frame in &layout.frames {
        let mut tokens = Vec::with_capacity(frame.len());
        for entry in frame {
            let entity = scene
                .entity(&entry.id)
                .expect("dense layout entries come from the scene's entities");
            let (key, text) = embedding_key(plan, scene_index, entity);
            let (img, txt) = cache.get_or_compute(&key, &text)?;
            let mut tok = grounding_token_variant(&img, &txt, &entry.bbox, params, variant)?;
            tok.entity_id = entry.id.clone();
            tokens.push(tok);
        }
        out.push(tokens);
    }
    Ok(SceneTokens {
        scene: scene_index,
        frames: out,
    })
}

/// Conditioning for the toy denoiser from one plan scene: shared-identity
/// embeddings and one box per latent frame, taken from the dense layout at
/// evenly spaced frames. The clean latent is left zero.
pub fn scene_example(
    plan: &VideoPlan,
    scene_index: u32,
    cache: &mut EmbeddingCache<'_>,
    latent_shape: (usize, usize, usize, usize),
) -> Result<ToyExample, GroundingError> {
    let scene = plan
        .scenes
        .iter()
        .find(|s| s.index == scene_index)
        .ok_or(GroundingError::UnknownScene(scene_index))?;
    let dense = densify_plan(plan, None)?;
    let layout = dense
        .scenes
        .iter()
        .find(|s| s.scene == scene_index)
        .ok_or(GroundingError::UnknownScene(scene_index))?;
    let mut ex = ToyExample {
        names: Vec::new(),
        img: Vec::new(),
        txt: Vec::new(),
        boxes: Vec::new(),
        z0: LatentGrid::zeros(latent_shape),
    };
    for entity in &scene.entities {
        let (key, text) = embedding_key(plan, scene_index, entity);
        let (img, txt) = cache.get_or_compute(&key, &text)?;
        ex.names.push(entity.name.clone());
        ex.img.push(img.values);
        ex.txt.push(txt.values);
        let track = layout.track(&entity.id);
        ex.boxes.push(pick_frames(&track, latent_shape.0));
    }
    Ok(ex)
}

fn pick_frames<T: Copy>(track: &[T], n: usize) -> Vec<T> {
    if track.is_empty() {
        return Vec::new();
    }
    let last = track.len() - 1;
    (0..n)
        .map(|f| {
            let at = if n > 1 { (f * last + (n - 1) / 2) / (n - 1) } else { 0 };
            track[at]
        })
        .collect()
}
