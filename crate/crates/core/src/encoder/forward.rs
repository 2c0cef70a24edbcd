use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;

use super::{EncoderError, GmlpBlockWeights, LayerNorm, ModelWeights};
use crate::dsp::{audio_to_mfccs, AudioBuffer, Mfcc, MfccConfig};

pub const LN_EPS: f64 = 1e-5;

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone)]
pub struct NormCache {
    pub xhat: Array2<f64>,
    pub rstd: Array1<f64>,
}

/// Row-wise layer normalization.
pub fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, NormCache) {
    let width = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / width;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| (v - mean) * rs);
    }
    let y = &xhat * &ln.scale + &ln.shift;
    (y, NormCache { xhat, rstd })
}

/// How a block's residual branch is treated on one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// Branch skipped; the block is the identity.
    Dropped,
    /// Branch kept and multiplied by the factor (1/survival in training,
    /// 1 at inference).
    Kept(f64),
}

impl Branch {
    pub const INFERENCE: Branch = Branch::Kept(1.0);

    /// Draws a stochastic-depth decision. `survival >= 1` always keeps.
    pub fn sample<R: Rng + ?Sized>(survival: f64, rng: &mut R) -> Self {
        if survival >= 1.0 {
            Branch::INFERENCE
        } else if rng.random::<f64>() < survival {
            Branch::Kept(1.0 / survival)
        } else {
            Branch::Dropped
        }
    }
}

/// Every intermediate of one kept block, in evaluation order.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub pre_norm: NormCache,
    /// Normalized block input.
    pub normed: Array2<f64>,
    /// Pre-activation of the channel expansion.
    pub expanded: Array2<f64>,
    /// `GELU(expanded)`, `T x proj_dim`.
    pub activated: Array2<f64>,
    pub gate_norm: NormCache,
    /// Normalized gate half.
    pub gate_normed: Array2<f64>,
    /// Temporal projection of the gate half plus bias.
    pub gate: Array2<f64>,
    /// Residual half times gate.
    pub gated: Array2<f64>,
    /// Unscaled branch output.
    pub branch: Array2<f64>,
}

impl BlockTrace {
    /// The residual (ungated) half of the activation.
    pub fn residual_half(&self) -> Array2<f64> {
        let h = self.activated.ncols() / 2;
        self.activated.slice(s![.., ..h]).to_owned()
    }
}

/// Runs one block. Returns the block output and, when the branch is kept,
/// its trace.
pub fn block_forward(x: &Array2<f64>, w: &GmlpBlockWeights, branch: Branch) -> (Array2<f64>, Option<BlockTrace>) {
    let scale = match branch {
        Branch::Dropped => return (x.clone(), None),
        Branch::Kept(s) => s,
    };
    let (normed, pre_norm) = layer_norm(x, &w.pre_norm);
    let expanded = normed.dot(&w.proj_in.weight) + &w.proj_in.bias;
    let activated = expanded.mapv(gelu);
    let h = activated.ncols() / 2;
    let residual = activated.slice(s![.., ..h]);
    let (gate_normed, gate_norm) = layer_norm(&activated.slice(s![.., h..]).to_owned(), &w.gate_norm);
    let gate = w.spatial.weight.dot(&gate_normed) + w.spatial.bias.view().insert_axis(Axis(1));
    let gated = &residual * &gate;
    let branch_out = gated.dot(&w.proj_out.weight) + &w.proj_out.bias;
    let out = x + &(&branch_out * scale);
    let trace =
        BlockTrace { pre_norm, normed, expanded, activated, gate_norm, gate_normed, gate, gated, branch: branch_out };
    (out, Some(trace))
}

fn check_block(x: &Array2<f64>, w: &GmlpBlockWeights) -> Result<(), EncoderError> {
    let expected = (w.spatial.weight.nrows(), w.proj_out.weight.ncols());
    if x.dim() != expected {
        return Err(EncoderError::Shape { what: "block input", expected, got: x.dim() });
    }
    Ok(())
}

/// One gMLP block. With `survival < 1` the residual branch is dropped with
/// probability `1 - survival` and otherwise scaled by `1/survival`.
pub fn gmlp_block<R: Rng + ?Sized>(
    x: &Array2<f64>,
    w: &GmlpBlockWeights,
    survival: f64,
    rng: &mut R,
) -> Result<Array2<f64>, EncoderError> {
    if !(survival > 0.0 && survival <= 1.0) {
        return Err(EncoderError::Survival(survival));
    }
    check_block(x, w)?;
    Ok(block_forward(x, w, Branch::sample(survival, rng)).0)
}

/// Inference-mode block with its full trace.
pub fn trace_block(x: &Array2<f64>, w: &GmlpBlockWeights) -> Result<(Array2<f64>, BlockTrace), EncoderError> {
    check_block(x, w)?;
    let (out, trace) = block_forward(x, w, Branch::INFERENCE);
    Ok((out, trace.expect("kept branch has a trace")))
}

fn check_input(x: &Mfcc, weights: &ModelWeights) -> Result<(), EncoderError> {
    let c = &weights.config;
    let expected = (c.freq_bins, c.time_steps);
    if x.values.dim() != expected {
        return Err(EncoderError::Shape { what: "MFCC input", expected, got: x.values.dim() });
    }
    Ok(())
}

/// Projects each MFCC frame to the embedding width: `x^T P0 + b`, `T x dim`.
pub fn patch_embed(x: &Mfcc, weights: &ModelWeights) -> Result<Array2<f64>, EncoderError> {
    check_input(x, weights)?;
    Ok(x.values.t().dot(&weights.patch.weight) + &weights.patch.bias)
}

/// Hidden states after each of the first `depth` blocks (before the final
/// norm), inference mode.
pub fn encode_segment_trace(x: &Mfcc, weights: &ModelWeights, depth: usize) -> Result<Vec<Array2<f64>>, EncoderError> {
    check_depth(depth, weights)?;
    let mut h = patch_embed(x, weights)?;
    let mut states = Vec::with_capacity(depth);
    for block in &weights.blocks[..depth] {
        h = block_forward(&h, block, Branch::INFERENCE).0;
        states.push(h.clone());
    }
    Ok(states)
}

fn check_depth(depth: usize, weights: &ModelWeights) -> Result<(), EncoderError> {
    let max = weights.blocks.len();
    if depth == 0 || depth > max {
        return Err(EncoderError::Depth { depth, max });
    }
    Ok(())
}

/// Timestamp embeddings of one segment from the first `depth` blocks,
/// followed by the final norm. `T x dim`.
pub fn encode_segment(x: &Mfcc, weights: &ModelWeights, depth: usize) -> Result<Array2<f64>, EncoderError> {
    check_depth(depth, weights)?;
    let mut h = patch_embed(x, weights)?;
    for block in &weights.blocks[..depth] {
        h = block_forward(&h, block, Branch::INFERENCE).0;
    }
    Ok(layer_norm(&h, &weights.final_norm).0)
}

/// Everything the backward pass needs from one training forward.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub input_t: Array2<f64>,
    pub branches: Vec<Branch>,
    pub traces: Vec<Option<BlockTrace>>,
    pub final_norm: NormCache,
    pub pooled: Array1<f64>,
    pub logits: Array1<f64>,
}

pub(crate) fn forward_train(
    x: &Mfcc,
    weights: &ModelWeights,
    branches: &[Branch],
) -> Result<ForwardCache, EncoderError> {
    assert_eq!(branches.len(), weights.blocks.len(), "one branch decision per block");
    let mut h = patch_embed(x, weights)?;
    let mut traces = Vec::with_capacity(branches.len());
    for (block, &b) in weights.blocks.iter().zip(branches) {
        let (out, trace) = block_forward(&h, block, b);
        h = out;
        traces.push(trace);
    }
    let (embedded, final_norm) = layer_norm(&h, &weights.final_norm);
    let pooled = embedded.mean_axis(Axis(0)).expect("non-empty time axis");
    let logits = pooled.dot(&weights.head.weight) + &weights.head.bias;
    Ok(ForwardCache {
        input_t: x.values.t().to_owned(),
        branches: branches.to_vec(),
        traces,
        final_norm,
        pooled,
        logits,
    })
}

/// Full-depth logits: encode, mean-pool over time, linear head.
pub fn classify(x: &Mfcc, weights: &ModelWeights) -> Result<Array1<f64>, EncoderError> {
    let pooled = encode_segment(x, weights, weights.blocks.len())?.mean_axis(Axis(0)).expect("non-empty time axis");
    Ok(pooled.dot(&weights.head.weight) + &weights.head.bias)
}

/// Concatenated per-frame embeddings for a whole clip.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampEmbeddings {
    /// `N_T x dim`.
    pub values: Array2<f64>,
    /// Embeddings per second of audio.
    pub frame_rate: f64,
}

impl TimestampEmbeddings {
    pub fn new(values: Array2<f64>, frame_rate: f64) -> Self {
        Self { values, frame_rate }
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Resample, segment, MFCC, and encode every 1 s segment at `depth`; the
/// per-segment outputs are stacked along time.
pub fn encode_audio(
    audio: &AudioBuffer,
    weights: &ModelWeights,
    depth: usize,
    mfcc_config: &MfccConfig,
) -> Result<TimestampEmbeddings, EncoderError> {
    check_depth(depth, weights)?;
    let mfccs = audio_to_mfccs(audio, mfcc_config)?;
    let parts = crate::parallel::map_slice(&mfccs, |m| encode_segment(m, weights, depth))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let values = concatenate(Axis(0), &views).expect("segments share width");
    Ok(TimestampEmbeddings::new(values, weights.config.time_steps as f64))
}

/// Like [`encode_audio`] for several depths at once, sharing one pass through
/// the blocks. Returns one result per entry of `depths`, in order.
pub fn encode_audio_depths(
    audio: &AudioBuffer,
    weights: &ModelWeights,
    depths: &[usize],
    mfcc_config: &MfccConfig,
) -> Result<Vec<TimestampEmbeddings>, EncoderError> {
    for &d in depths {
        check_depth(d, weights)?;
    }
    let Some(&deepest) = depths.iter().max() else {
        return Ok(Vec::new());
    };
    let mfccs = audio_to_mfccs(audio, mfcc_config)?;
    let traces = crate::parallel::map_slice(&mfccs, |m| encode_segment_trace(m, weights, deepest))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(depths
        .iter()
        .map(|&d| {
            let parts: Vec<Array2<f64>> = traces.iter().map(|t| layer_norm(&t[d - 1], &weights.final_norm).0).collect();
            let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
            let values = concatenate(Axis(0), &views).expect("segments share width");
            TimestampEmbeddings::new(values, weights.config.time_steps as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_weights, EncoderConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> EncoderConfig {
        EncoderConfig { freq_bins: 4, time_steps: 6, dim: 4, proj_dim: 8, blocks: 3, n_classes: 3 }
    }

    fn rand_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gelu_reference() {
        assert_eq!(gelu(0.0), 0.0);
        // GELU(1) = 0.8413447460685429
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        let h = 1e-6;
        for &x in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_mat(5, 16, &mut rng) * 3.0 + 2.0;
        let (y, _) = layer_norm(&x, &LayerNorm::identity(16));
        for row in y.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
            let var = row.mapv(|v| v * v).mean().unwrap();
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_input_patch_embed_is_bias() {
        let mut w = init_weights(toy(), 0).unwrap();
        w.patch.bias = Array1::from(vec![1.0, -2.0, 3.0, 0.5]);
        let y = patch_embed(&Mfcc::new(Array2::zeros((4, 6))), &w).unwrap();
        for row in y.rows() {
            assert_eq!(row, w.patch.bias);
        }
    }

    #[test]
    fn patch_embed_hand_product() {
        // F=2, T=3, d=2
        let cfg = EncoderConfig { freq_bins: 2, time_steps: 3, dim: 2, proj_dim: 2, blocks: 1, n_classes: 2 };
        let mut w = init_weights(cfg, 0).unwrap();
        w.patch.weight = ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        w.patch.bias = ndarray::arr1(&[0.5, -0.5]);
        let x = Mfcc::new(ndarray::arr2(&[[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]]));
        // frames: [1,0] -> [1,2]; [0,1] -> [3,4]; [2,-1] -> [-1,0]
        let expected = ndarray::arr2(&[[1.5, 1.5], [3.5, 3.5], [-0.5, -0.5]]);
        assert_eq!(patch_embed(&x, &w).unwrap(), expected);
    }

    #[test]
    fn zero_out_projection_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = init_weights(toy(), 4).unwrap();
        let b = &mut w.blocks[0];
        b.proj_out.weight.fill(0.0);
        b.proj_out.bias.fill(0.0);
        let x = rand_mat(6, 4, &mut rng);
        assert_eq!(gmlp_block(&x, b, 1.0, &mut rng).unwrap(), x);
    }

    #[test]
    fn dropped_branch_is_identity_and_kept_is_rescaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = init_weights(toy(), 5).unwrap();
        let x = rand_mat(6, 4, &mut rng);
        let (dropped, trace) = block_forward(&x, &w.blocks[0], Branch::Dropped);
        assert_eq!(dropped, x);
        assert!(trace.is_none());
        let (kept, t) = block_forward(&x, &w.blocks[0], Branch::Kept(1.0 / 0.9));
        let t = t.unwrap();
        let expect = &x + &(&t.branch / 0.9);
        assert!((&kept - &expect).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn block_rejects_bad_shapes_and_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = init_weights(toy(), 0).unwrap();
        assert!(matches!(
            gmlp_block(&Array2::zeros((5, 4)), &w.blocks[0], 1.0, &mut rng),
            Err(EncoderError::Shape { .. })
        ));
        assert!(matches!(
            gmlp_block(&Array2::zeros((6, 4)), &w.blocks[0], 0.0, &mut rng),
            Err(EncoderError::Survival(_))
        ));
    }

    #[test]
    fn depth_bounds() {
        let w = init_weights(toy(), 0).unwrap();
        let x = Mfcc::new(Array2::zeros((4, 6)));
        assert!(matches!(encode_segment(&x, &w, 0), Err(EncoderError::Depth { .. })));
        assert!(matches!(encode_segment(&x, &w, 4), Err(EncoderError::Depth { depth: 4, max: 3 })));
        assert!(encode_segment(&x, &w, 3).is_ok());
    }

    #[test]
    fn zero_head_gives_bias_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut w = init_weights(toy(), 0).unwrap();
        w.head.weight.fill(0.0);
        w.head.bias = ndarray::arr1(&[0.1, -0.2, 0.3]);
        let x = Mfcc::new(rand_mat(4, 6, &mut rng));
        assert_eq!(classify(&x, &w).unwrap(), w.head.bias);
    }

    #[test]
    fn classify_matches_training_forward_at_full_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = init_weights(toy(), 1).unwrap();
        let x = Mfcc::new(rand_mat(4, 6, &mut rng));
        let cache = forward_train(&x, &w, &[Branch::INFERENCE; 3]).unwrap();
        let logits = classify(&x, &w).unwrap();
        assert!((&cache.logits - &logits).iter().all(|d| d.abs() < 1e-12));
    }
}
