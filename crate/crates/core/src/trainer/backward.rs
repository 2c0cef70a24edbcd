use std::ops::{Deref, DerefMut};

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{smoothed_cross_entropy, TrainConfig, TrainError};
use crate::dsp::Mfcc;
use crate::encoder::{forward_train, gelu_grad, Branch, EncoderError, LayerNorm, ModelWeights, NormCache};
use crate::params::{ParamMut, ParamRef, Parameters};

/// Gradient buffers with the same tensor layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape(pub ModelWeights);

impl GradientTape {
    pub fn zeros_like(weights: &ModelWeights) -> Self {
        Self(weights.zeros_like())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &GradientTape) {
        for (a, b) in self.0.params_mut().into_iter().zip(other.0.params()) {
            a.data.iter_mut().zip(b.data).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.params().iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }
}

impl Deref for GradientTape {
    type Target = ModelWeights;
    fn deref(&self) -> &ModelWeights {
        &self.0
    }
}

impl DerefMut for GradientTape {
    fn deref_mut(&mut self) -> &mut ModelWeights {
        &mut self.0
    }
}

impl Parameters for GradientTape {
    fn params(&self) -> Vec<ParamRef<'_>> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.0.params_mut()
    }
}

/// Backward pass of row-wise layer norm. Returns `(dx, dscale, dshift)`.
pub fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    ln: &LayerNorm,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let dshift = dy.sum_axis(Axis(0));
    let dscale = (dy * &cache.xhat).sum_axis(Axis(0));
    let dxhat = dy * &ln.scale;
    let width = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), &r) in dx.rows_mut().into_iter().zip(dxhat.rows()).zip(cache.xhat.rows()).zip(&cache.rstd)
    {
        let mean_g = g.sum() / width;
        let mean_gx = g.dot(&xh) / width;
        out.assign(&((&g - mean_g - &(&xh * mean_gx)) * r));
    }
    (dx, dscale, dshift)
}

/// Loss and gradient of one example under fixed branch decisions. The
/// gradient is multiplied by `scale` (1/batch for a batch mean).
pub fn example_gradient(
    x: &Mfcc,
    label: usize,
    weights: &ModelWeights,
    branches: &[Branch],
    smoothing: f64,
    scale: f64,
) -> Result<(f64, GradientTape), EncoderError> {
    let cache = forward_train(x, weights, branches)?;
    let (loss, dlogits) = smoothed_cross_entropy(cache.logits.view(), label, smoothing);
    let dlogits = dlogits * scale;
    let mut g = GradientTape::zeros_like(weights);
    let t = weights.config.time_steps;

    let pooled = cache.pooled.view().insert_axis(Axis(1));
    g.head.weight.assign(&pooled.dot(&dlogits.view().insert_axis(Axis(0))));
    g.head.bias.assign(&dlogits);
    let dpooled = weights.head.weight.dot(&dlogits) / t as f64;
    let dembedded = Array2::from_shape_fn((t, dpooled.len()), |(_, j)| dpooled[j]);
    let (mut dh, ds, db) = layer_norm_backward(&dembedded, &cache.final_norm, &weights.final_norm);
    g.final_norm.scale.assign(&ds);
    g.final_norm.shift.assign(&db);

    for l in (0..weights.blocks.len()).rev() {
        let (factor, tr) = match (cache.branches[l], &cache.traces[l]) {
            (Branch::Kept(f), Some(tr)) => (f, tr),
            _ => continue,
        };
        let w = &weights.blocks[l];
        let gb = &mut g.blocks[l];
        let dbranch = &dh * factor;
        gb.proj_out.bias.assign(&dbranch.sum_axis(Axis(0)));
        gb.proj_out.weight.assign(&tr.gated.t().dot(&dbranch));
        let dgated = dbranch.dot(&w.proj_out.weight.t());

        let half = tr.activated.ncols() / 2;
        let residual = tr.activated.slice(s![.., ..half]);
        let dresidual = &dgated * &tr.gate;
        let dgate = &dgated * &residual;
        gb.spatial.bias.assign(&dgate.sum_axis(Axis(1)));
        gb.spatial.weight.assign(&dgate.dot(&tr.gate_normed.t()));
        let dgate_normed = w.spatial.weight.t().dot(&dgate);
        let (dgate_half, dgs, dgb) = layer_norm_backward(&dgate_normed, &tr.gate_norm, &w.gate_norm);
        gb.gate_norm.scale.assign(&dgs);
        gb.gate_norm.shift.assign(&dgb);

        let mut dexpanded = Array2::zeros(tr.expanded.raw_dim());
        dexpanded.slice_mut(s![.., ..half]).assign(&dresidual);
        dexpanded.slice_mut(s![.., half..]).assign(&dgate_half);
        dexpanded.zip_mut_with(&tr.expanded, |d, &a| *d *= gelu_grad(a));
        gb.proj_in.bias.assign(&dexpanded.sum_axis(Axis(0)));
        gb.proj_in.weight.assign(&tr.normed.t().dot(&dexpanded));
        let dnormed = dexpanded.dot(&w.proj_in.weight.t());
        let (dx, dps, dpb) = layer_norm_backward(&dnormed, &tr.pre_norm, &w.pre_norm);
        gb.pre_norm.scale.assign(&dps);
        gb.pre_norm.shift.assign(&dpb);
        dh += &dx;
    }

    g.patch.bias.assign(&dh.sum_axis(Axis(0)));
    g.patch.weight.assign(&cache.input_t.t().dot(&dh));
    Ok((loss, g))
}

/// Examples per parallel chunk. Per-example tapes of a chunk are summed in
/// index order, so results do not depend on the thread count.
const CHUNK: usize = 16;

/// Mean loss and gradient over a batch. Stochastic-depth decisions come from
/// per-example streams seeded by `rng`, drawn in example order.
pub fn backward<R: Rng + ?Sized>(
    batch: &[(Mfcc, usize)],
    weights: &ModelWeights,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(f64, GradientTape), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Empty);
    }
    let n_classes = weights.config.n_classes;
    if let Some((index, (_, label))) = batch.iter().enumerate().find(|(_, (_, l))| *l >= n_classes) {
        return Err(TrainError::Label { index, label: *label, n_classes });
    }
    let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.random()).collect();
    let scale = 1.0 / batch.len() as f64;
    let blocks = weights.blocks.len();

    let mut total = GradientTape::zeros_like(weights);
    let mut loss_sum = 0.0;
    for start in (0..batch.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(batch.len());
        let results = crate::parallel::map_indexed(end - start, |k| {
            let i = start + k;
            let mut ex_rng = ChaCha8Rng::seed_from_u64(seeds[i]);
            let branches: Vec<Branch> =
                (0..blocks).map(|_| Branch::sample(config.survival_prob, &mut ex_rng)).collect();
            let (x, label) = &batch[i];
            example_gradient(x, *label, weights, &branches, config.label_smoothing, scale)
        });
        for (k, r) in results.into_iter().enumerate() {
            let (loss, tape) = r?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { index: start + k });
            }
            loss_sum += loss;
            total.add_assign(&tape);
        }
    }
    Ok((loss_sum * scale, total))
}
