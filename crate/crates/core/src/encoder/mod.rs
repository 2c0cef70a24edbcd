//! The gated-MLP encoder: patch embedding, a stack of gMLP blocks, a final
//! layer norm, and a mean-pooled linear head used only for pretraining.

mod format;
mod forward;
mod inspect;
mod weights;

pub(crate) use format::{fill_params, meta_entry, params_table, parse_meta};
pub use format::{load_weights, read_table, save_weights, write_table, FormatError, TensorData, TensorEntry};
pub(crate) use forward::forward_train;
pub use forward::{
    block_forward, classify, encode_audio, encode_audio_depths, encode_segment, encode_segment_trace, gelu, gelu_grad,
    gmlp_block, layer_norm, patch_embed, trace_block, BlockTrace, Branch, NormCache, TimestampEmbeddings, LN_EPS,
};
pub use inspect::{export_temporal_weights, toeplitzness, TemporalWeights};
pub use weights::{init_weights, parameter_count, GmlpBlockWeights, LayerNorm, Linear, ModelWeights};

use thiserror::Error;

use crate::dsp::DspError;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape { what: &'static str, expected: (usize, usize), got: (usize, usize) },
    #[error("depth {depth} out of range 1..={max}")]
    Depth { depth: usize, max: usize },
    #[error("survival probability {0} outside (0, 1]")]
    Survival(f64),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Model dimensions. Defaults are the 12-block, 35-class encoder on 40 x 98
/// MFCC input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    /// MFCC coefficients per frame.
    pub freq_bins: usize,
    /// Frames per segment.
    pub time_steps: usize,
    /// Embedding width.
    pub dim: usize,
    /// Projection width inside each block; split in half for gating.
    pub proj_dim: usize,
    pub blocks: usize,
    pub n_classes: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { freq_bins: 40, time_steps: 98, dim: 64, proj_dim: 256, blocks: 12, n_classes: 35 }
    }
}

impl EncoderConfig {
    pub fn with_blocks(blocks: usize) -> Self {
        Self { blocks, ..Self::default() }
    }

    pub fn gate_dim(&self) -> usize {
        self.proj_dim / 2
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let c = self;
        if c.freq_bins == 0 || c.time_steps == 0 || c.dim == 0 || c.proj_dim == 0 || c.n_classes == 0 {
            return Err(EncoderError::Config("all dimensions must be positive".into()));
        }
        if !c.proj_dim.is_multiple_of(2) {
            return Err(EncoderError::Config(format!("projection dim {} must be even", c.proj_dim)));
        }
        if c.blocks == 0 {
            return Err(EncoderError::Config("need at least one block".into()));
        }
        Ok(())
    }

    /// Scalar parameters in one block.
    pub fn block_param_count(&self) -> usize {
        let (t, d, p, h) = (self.time_steps, self.dim, self.proj_dim, self.gate_dim());
        2 * d + (d * p + p) + 2 * h + (t * t + t) + (h * d + d)
    }

    /// Closed-form parameter total from the shapes alone.
    pub fn param_count(&self) -> usize {
        let (f, d, k) = (self.freq_bins, self.dim, self.n_classes);
        (f * d + d) + self.blocks * self.block_param_count() + 2 * d + (d * k + k)
    }
}
