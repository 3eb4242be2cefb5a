//! Training configuration with JSON defaults and validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CycleConfig, LocalizerVariant};

/// Which steps feed the reconstruction objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordFilter {
    /// Reconstruct every target.
    None,
    /// Count reconstruction loss only at groundable targets.
    ZeroLoss,
    /// Feed a zero region vector where the localized word is not
    /// groundable (loss still counts every target).
    ZeroRepresentation,
}

impl WordFilter {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ZeroLoss => "zero_loss",
            Self::ZeroRepresentation => "zero_representation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "zero_loss" => Ok(Self::ZeroLoss),
            "zero_representation" => Ok(Self::ZeroRepresentation),
            other => Err(Error::config(format!(
                "unknown word filter {other:?} (expected none, zero_loss, or zero_representation)"
            ))),
        }
    }
}

/// Per-step loss inclusion under a filter: `true` keeps the target's
/// reconstruction term.
pub fn word_filter_mask(filter: WordFilter, targets: &[usize], groundable: &[bool]) -> Vec<bool> {
    match filter {
        WordFilter::ZeroLoss => targets.iter().map(|&t| groundable[t]).collect(),
        WordFilter::None | WordFilter::ZeroRepresentation => vec![true; targets.len()],
    }
}

fn default_seed() -> u64 {
    0
}
fn default_max_epochs() -> usize {
    120
}
fn default_pretrain_epochs() -> usize {
    50
}
fn default_batch_size() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_adam_beta1() -> f64 {
    0.9
}
fn default_adam_beta2() -> f64 {
    0.999
}
fn default_adam_epsilon() -> f64 {
    1e-8
}
fn default_grad_clip() -> f64 {
    5.0
}
fn default_lambda() -> f64 {
    0.5
}
fn default_attention_consistency() -> f64 {
    0.0
}
fn default_word_filter() -> WordFilter {
    WordFilter::None
}
fn default_localizer_variant() -> LocalizerVariant {
    LocalizerVariant::Linear
}
fn default_dropout() -> f64 {
    0.0
}
fn default_embed() -> usize {
    64
}
fn default_hidden() -> usize {
    64
}
fn default_box_embed() -> usize {
    16
}
fn default_plateau_patience() -> usize {
    5
}
fn default_max_generate_len() -> usize {
    12
}

/// Everything the training loop needs. Serializes as flat JSON; every
/// field has a default so partial configs (and sweep overlays) are valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Decode-only warmup epochs before the full cycle starts.
    #[serde(default = "default_pretrain_epochs")]
    pub pretrain_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_adam_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_adam_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_epsilon")]
    pub adam_epsilon: f64,
    /// Global-norm gradient clip.
    #[serde(default = "default_grad_clip")]
    pub grad_clip: f64,
    #[serde(default = "default_lambda")]
    pub lambda_decode: f64,
    #[serde(default = "default_lambda")]
    pub lambda_reconstruct: f64,
    /// Weight of the KL term tying decoder attention to the localizer.
    #[serde(default = "default_attention_consistency")]
    pub attention_consistency: f64,
    #[serde(default = "default_word_filter")]
    pub word_filter: WordFilter,
    #[serde(default = "default_localizer_variant")]
    pub localizer_variant: LocalizerVariant,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_embed")]
    pub embed: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_box_embed")]
    pub box_embed: usize,
    #[serde(default = "default_plateau_patience")]
    pub plateau_patience: usize,
    #[serde(default = "default_max_generate_len")]
    pub max_generate_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config uses defaults")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [
            ("lambda_decode", self.lambda_decode),
            ("lambda_reconstruct", self.lambda_reconstruct),
            ("attention_consistency", self.attention_consistency),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.lambda_decode == 0.0 && self.lambda_reconstruct == 0.0 {
            return Err(Error::config(
                "lambda_decode and lambda_reconstruct cannot both be zero",
            ));
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !v.is_finite() || !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::config("adam_epsilon must be positive"));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip > 0.0) {
            return Err(Error::config("grad_clip must be positive"));
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        for (name, v) in [
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("box_embed", self.box_embed),
            ("plateau_patience", self.plateau_patience),
            ("max_generate_len", self.max_generate_len),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Forward-pass options for one training example. `warmup` restricts
    /// the pass to the decode stage.
    pub fn cycle_config(&self, warmup: bool, pad_token: usize) -> CycleConfig {
        CycleConfig {
            lambda_decode: self.lambda_decode,
            lambda_reconstruct: if warmup { 0.0 } else { self.lambda_reconstruct },
            attention_weight: if warmup { 0.0 } else { self.attention_consistency },
            zero_loss: self.word_filter == WordFilter::ZeroLoss,
            zero_representation: self.word_filter == WordFilter::ZeroRepresentation,
            dropout: self.dropout,
            trainable: true,
            pad_token,
            force_localize: false,
            localizer_words: None,
        }
    }
}
