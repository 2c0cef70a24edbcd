use crate::encoder::{
    fill_params, meta_entry, params_table, parse_meta, read_table, write_table, FormatError, ModelWeights, TensorData,
    TensorEntry,
};
use crate::params::Parameters;

use super::GradientTape;

pub const OPT_MAGIC: &[u8; 4] = b"OPT1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.1 }
    }
}

/// AdamW state for any [`Parameters`] type. Moments are stored per tensor
/// in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    /// Completed steps.
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<P: Parameters>(params: &P, config: AdamWConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.params().iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// One decoupled-weight-decay Adam update. Decay applies only to
    /// projection matrices.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let targets = params.params_mut();
        let grads = grads.params();
        assert_eq!(targets.len(), self.m.len(), "optimizer built for a different model");
        for (((p, g), m), v) in targets.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let decay = if p.kind.decays() { c.weight_decay } else { 0.0 };
            for (((w, &g), m), v) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + c.eps) + lr * decay * *w;
            }
        }
    }
}

/// Applies one AdamW step to the encoder weights.
pub fn adamw_step(weights: &mut ModelWeights, tape: &GradientTape, state: &mut AdamW, lr: f64) {
    state.step(weights, &tape.0, lr);
}

/// `OPT1` sidecar: the weight file's tensor-table layout with a `meta`
/// entry, a `step` entry (u32 low, high), then `m.<name>` and `v.<name>`
/// for every parameter.
pub fn save_optimizer(state: &AdamW, weights: &ModelWeights) -> Vec<u8> {
    let mut moments = weights.clone();
    let mut entries = vec![meta_entry(&weights.config)];
    entries.push(TensorEntry::u32("step", vec![state.step as u32, (state.step >> 32) as u32]));
    for (prefix, buffers) in [("m.", &state.m), ("v.", &state.v)] {
        for (p, b) in moments.params_mut().into_iter().zip(buffers) {
            p.data.copy_from_slice(b);
        }
        entries.extend(params_table(prefix, &moments));
    }
    write_table(OPT_MAGIC, &entries)
}

pub fn load_optimizer(
    bytes: &[u8],
    config: AdamWConfig,
) -> Result<(AdamW, crate::encoder::EncoderConfig), FormatError> {
    let entries = read_table(OPT_MAGIC, bytes)?;
    let enc = parse_meta(entries.first())?;
    let step = match entries.get(1) {
        Some(TensorEntry { name, data: TensorData::U32(v), .. }) if name == "step" && v.len() == 2 => {
            v[0] as u64 | (v[1] as u64) << 32
        }
        _ => return Err(FormatError::Missing("step".into())),
    };
    let mut template = ModelWeights::zeros(enc).map_err(|e| FormatError::Meta(e.to_string()))?;
    let mut rest = entries.into_iter().skip(2);
    let mut state = AdamW::new(&template, config);
    state.step = step;
    for (prefix, target) in [("m.", &mut state.m), ("v.", &mut state.v)] {
        fill_params(&mut template, prefix, &mut rest)?;
        for (p, b) in template.params().into_iter().zip(target.iter_mut()) {
            b.copy_from_slice(p.data);
        }
    }
    if let Some(extra) = rest.next() {
        return Err(FormatError::Unexpected(extra.name));
    }
    Ok((state, enc))
}
