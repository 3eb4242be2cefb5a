//! Grounded captioning model: a two-LSTM attention decoder, a word-driven
//! region localizer, and a reconstruction pass that reuses the decoder's
//! parameters on localized regions.

mod checkpoint;
mod decoder;
mod encode;
mod localizer;
mod lstm;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use decoder::{
    attention_step, cyclical_forward, generate, language_step, soft_attention, CycleConfig,
    CycleOutput, GenStep, Generated, StepTrace,
};
pub use encode::{encode_scene, EncodedScene, SceneView};
pub use localizer::{localize, Localized};
pub use lstm::{lstm_step, LstmWeights};
pub use params::{
    LocalizerNodes, LocalizerParams, LocalizerVariant, ModelDims, ModelParams, ParamNodes,
};

use crate::synthdata::{Dataset, Vocabulary};

impl ModelDims {
    /// Dims matching a generated dataset's vocabulary and feature layout.
    pub fn for_dataset(dataset: &Dataset, embed: usize, hidden: usize, box_embed: usize) -> Self {
        ModelDims {
            embed,
            hidden,
            feature_dim: dataset.spec.class_embed_dim,
            num_classes: dataset.spec.num_classes,
            box_embed,
            vocab_size: dataset.vocab.size(),
        }
    }
}

/// Per-id groundable mask sized for `cyclical_forward`.
pub fn groundable_mask(vocab: &Vocabulary) -> Vec<bool> {
    vocab.groundable.clone()
}
