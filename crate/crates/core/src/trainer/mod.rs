//! Supervised pretraining: masking augmentation, label-smoothed
//! cross-entropy, hand-written reverse-mode gradients, AdamW with a warmup
//! plus cosine schedule, and stochastic depth.

mod augment;
mod backward;
mod loss;
mod optim;
mod schedule;
mod train;

pub use augment::{augment, mask_freq, mask_time};
pub use backward::{backward, example_gradient, layer_norm_backward, GradientTape};
pub use loss::{cross_entropy, smoothed_cross_entropy};
pub use optim::{adamw_step, load_optimizer, save_optimizer, AdamW, AdamWConfig};
pub use schedule::lr_at;
pub use train::{accuracy, train, train_with_init, StepLog, TrainOutcome};

use thiserror::Error;

use crate::encoder::{EncoderError, FormatError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty dataset or batch")]
    Empty,
    #[error("label {label} at index {index} is not below {n_classes}")]
    Label { index: usize, label: usize, n_classes: usize },
    #[error("non-finite loss at batch index {index}")]
    NonFinite { index: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Training recipe. Defaults: 140 epochs, batch 256, peak lr 1e-3 after 10
/// warmup epochs, cosine decay, weight decay 0.1, label smoothing 0.1,
/// block survival 0.9, two time masks up to 25 frames and two frequency
/// masks up to 7 bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub survival_prob: f64,
    pub time_masks: usize,
    pub time_mask_max: usize,
    pub freq_masks: usize,
    pub freq_mask_max: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 140,
            batch_size: 256,
            peak_lr: 1e-3,
            warmup_epochs: 10,
            weight_decay: 0.1,
            label_smoothing: 0.1,
            survival_prob: 0.9,
            time_masks: 2,
            time_mask_max: 25,
            freq_masks: 2,
            freq_mask_max: 7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if self.warmup_epochs >= self.epochs {
            return bad("warmup_epochs must be below epochs");
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad("peak_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return bad("weight_decay must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 1)");
        }
        if !(self.survival_prob > 0.0 && self.survival_prob <= 1.0) {
            return bad("survival_prob must lie in (0, 1]");
        }
        Ok(())
    }
}
