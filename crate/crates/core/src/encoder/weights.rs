use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EncoderConfig, EncoderError};
use crate::params::{ParamKind, ParamMut, ParamRef, Parameters};

/// Affine map `x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((inputs, outputs)), bias: Array1::zeros(outputs) }
    }

    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-limit..limit));
        Self { weight, bias: Array1::zeros(outputs) }
    }
}

/// Per-row normalization with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
}

impl LayerNorm {
    pub fn identity(width: usize) -> Self {
        Self { scale: Array1::ones(width), shift: Array1::zeros(width) }
    }
}

/// One gated-MLP block.
#[derive(Debug, Clone, PartialEq)]
pub struct GmlpBlockWeights {
    pub pre_norm: LayerNorm,
    /// Channel expansion `dim -> proj_dim`.
    pub proj_in: Linear,
    pub gate_norm: LayerNorm,
    /// Temporal projection, stored `out_time x in_time` and applied as
    /// `spatial.weight . Z_gate + spatial.bias` (one bias per output frame).
    pub spatial: Linear,
    /// Channel contraction `proj_dim/2 -> dim`.
    pub proj_out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: EncoderConfig,
    pub patch: Linear,
    pub blocks: Vec<GmlpBlockWeights>,
    pub final_norm: LayerNorm,
    pub head: Linear,
}

impl ModelWeights {
    /// All-zero weights with identity norms; the shape template for loading
    /// files and for gradient buffers.
    pub fn zeros(config: EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        let c = config;
        let block = GmlpBlockWeights {
            pre_norm: LayerNorm::identity(c.dim),
            proj_in: Linear::zeros(c.dim, c.proj_dim),
            gate_norm: LayerNorm::identity(c.gate_dim()),
            spatial: Linear::zeros(c.time_steps, c.time_steps),
            proj_out: Linear::zeros(c.gate_dim(), c.dim),
        };
        Ok(Self {
            config,
            patch: Linear::zeros(c.freq_bins, c.dim),
            blocks: vec![block; c.blocks],
            final_norm: LayerNorm::identity(c.dim),
            head: Linear::zeros(c.dim, c.n_classes),
        })
    }

    /// Same shapes, every value zero (norm scales included).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Keeps the first `blocks` blocks.
    pub fn truncated(&self, blocks: usize) -> Result<Self, EncoderError> {
        if blocks == 0 || blocks > self.blocks.len() {
            return Err(EncoderError::Depth { depth: blocks, max: self.blocks.len() });
        }
        let mut w = self.clone();
        w.blocks.truncate(blocks);
        w.config.blocks = blocks;
        Ok(w)
    }
}

/// Deterministic initialization: Glorot-uniform projections, zero biases,
/// zero temporal matrices with unit gate bias, identity norms.
pub fn init_weights(config: EncoderConfig, seed: u64) -> Result<ModelWeights, EncoderError> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patch = Linear::glorot(c.freq_bins, c.dim, &mut rng);
    let blocks = (0..c.blocks)
        .map(|_| GmlpBlockWeights {
            pre_norm: LayerNorm::identity(c.dim),
            proj_in: Linear::glorot(c.dim, c.proj_dim, &mut rng),
            gate_norm: LayerNorm::identity(c.gate_dim()),
            spatial: Linear { weight: Array2::zeros((c.time_steps, c.time_steps)), bias: Array1::ones(c.time_steps) },
            proj_out: Linear::glorot(c.gate_dim(), c.dim, &mut rng),
        })
        .collect();
    let head = Linear::glorot(c.dim, c.n_classes, &mut rng);
    Ok(ModelWeights { config, patch, blocks, final_norm: LayerNorm::identity(c.dim), head })
}

/// Exact scalar count, biases and norm parameters included.
pub fn parameter_count(weights: &ModelWeights) -> usize {
    weights.num_params()
}

macro_rules! param_list {
    ($self:ident, $ctor:ident, $as_slice:ident, $($amp:tt)+) => {{
        let mut out = Vec::new();
        macro_rules! push {
            ($name:expr, $kind:expr, $arr:expr) => {{
                let shape = $arr.shape().to_vec();
                out.push($ctor {
                    name: $name,
                    kind: $kind,
                    shape,
                    data: $arr.$as_slice().expect("parameters are contiguous"),
                });
            }};
        }
        push!("P0".to_string(), ParamKind::Matrix, $($amp)+ $self.patch.weight);
        push!("P0.bias".to_string(), ParamKind::Bias, $($amp)+ $self.patch.bias);
        for (i, b) in ($($amp)+ $self.blocks).into_iter().enumerate() {
            push!(format!("block.{i}.pre_norm.scale"), ParamKind::NormScale, $($amp)+ b.pre_norm.scale);
            push!(format!("block.{i}.pre_norm.shift"), ParamKind::NormShift, $($amp)+ b.pre_norm.shift);
            push!(format!("block.{i}.U"), ParamKind::Matrix, $($amp)+ b.proj_in.weight);
            push!(format!("block.{i}.U.bias"), ParamKind::Bias, $($amp)+ b.proj_in.bias);
            push!(format!("block.{i}.gate_norm.scale"), ParamKind::NormScale, $($amp)+ b.gate_norm.scale);
            push!(format!("block.{i}.gate_norm.shift"), ParamKind::NormShift, $($amp)+ b.gate_norm.shift);
            push!(format!("block.{i}.G"), ParamKind::Matrix, $($amp)+ b.spatial.weight);
            push!(format!("block.{i}.G.bias"), ParamKind::Bias, $($amp)+ b.spatial.bias);
            push!(format!("block.{i}.V"), ParamKind::Matrix, $($amp)+ b.proj_out.weight);
            push!(format!("block.{i}.V.bias"), ParamKind::Bias, $($amp)+ b.proj_out.bias);
        }
        push!("final_norm.scale".to_string(), ParamKind::NormScale, $($amp)+ $self.final_norm.scale);
        push!("final_norm.shift".to_string(), ParamKind::NormShift, $($amp)+ $self.final_norm.shift);
        push!("head".to_string(), ParamKind::Matrix, $($amp)+ $self.head.weight);
        push!("head.bias".to_string(), ParamKind::Bias, $($amp)+ $self.head.bias);
        out
    }};
}

impl Parameters for ModelWeights {
    fn params(&self) -> Vec<ParamRef<'_>> {
        param_list!(self, ParamRef, as_slice, &)
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        param_list!(self, ParamMut, as_slice_mut, &mut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let c = EncoderConfig::default();
        let a = init_weights(c, 7).unwrap();
        assert_eq!(a, init_weights(c, 7).unwrap());
        assert_ne!(a, init_weights(c, 8).unwrap());
    }

    #[test]
    fn temporal_init_is_zero_with_unit_bias() {
        let w = init_weights(EncoderConfig::default(), 0).unwrap();
        for b in &w.blocks {
            assert!(b.spatial.weight.iter().all(|&v| v == 0.0));
            assert!(b.spatial.bias.iter().all(|&v| v == 1.0));
            assert!(b.pre_norm.scale.iter().all(|&v| v == 1.0));
            assert!(b.gate_norm.shift.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn glorot_bounds() {
        let w = init_weights(EncoderConfig::default(), 3).unwrap();
        let lim = (6.0f64 / (64.0 + 256.0)).sqrt();
        assert!(w.blocks[0].proj_in.weight.iter().all(|v| v.abs() < lim));
    }

    #[test]
    fn counts() {
        let w = init_weights(EncoderConfig::default(), 0).unwrap();
        assert_eq!(parameter_count(&w), 424_811);
        // toy: F=2 T=3 d=2 D=4 L=1 K=2
        // patch 2*2+2=6; block 4 + (8+4) + 4 + (9+3) + (4+2) = 38; final 4; head 4+2=6
        let toy = EncoderConfig { freq_bins: 2, time_steps: 3, dim: 2, proj_dim: 4, blocks: 1, n_classes: 2 };
        assert_eq!(parameter_count(&init_weights(toy, 0).unwrap()), 6 + 38 + 4 + 6);
        let deeper = EncoderConfig { blocks: 2, ..toy };
        assert_eq!(parameter_count(&init_weights(deeper, 0).unwrap()), 6 + 2 * 38 + 4 + 6);
    }

    #[test]
    fn count_ignores_values() {
        let c = EncoderConfig::with_blocks(8);
        let a = init_weights(c, 1).unwrap();
        assert_eq!(parameter_count(&a), parameter_count(&a.zeros_like()));
        assert_eq!(parameter_count(&a), c.param_count());
    }

    #[test]
    fn param_names_unique_and_ordered() {
        let w = init_weights(EncoderConfig::with_blocks(2), 0).unwrap();
        let names: Vec<String> = w.params().into_iter().map(|p| p.name).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        assert_eq!(names[0], "P0");
        assert_eq!(names.last().unwrap(), "head.bias");
    }
}
