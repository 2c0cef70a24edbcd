//! Shallow classifiers trained on frozen embeddings.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoder::{gelu, gelu_grad, Linear};
use crate::params::{ParamKind, ParamMut, ParamRef, Parameters};
use crate::trainer::{cross_entropy, AdamW, AdamWConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("need at least two examples")]
    TooFew,
    #[error("need at least two classes")]
    SingleClass,
    #[error("{rows} embedding rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("embedding width {got}, probe expects {expected}")]
    Width { expected: usize, got: usize },
    #[error("non-finite embedding value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// 0 = linear probe.
    pub hidden_units: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { hidden_units: 0, epochs: 300, lr: 1e-2, weight_decay: 0.0, seed: 0 }
    }
}

/// Feature standardizer plus an optional GELU hidden layer and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeWeights {
    pub mean: Array1<f64>,
    pub inv_std: Array1<f64>,
    pub hidden: Option<Linear>,
    pub output: Linear,
}

impl ProbeWeights {
    pub fn n_classes(&self) -> usize {
        self.output.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }
}

fn linear_refs<'a>(out: &mut Vec<ParamRef<'a>>, name: &str, l: &'a Linear) {
    out.push(ParamRef {
        name: name.into(),
        kind: ParamKind::Matrix,
        shape: l.weight.shape().to_vec(),
        data: l.weight.as_slice().expect("standard layout"),
    });
    out.push(ParamRef {
        name: format!("{name}.bias"),
        kind: ParamKind::Bias,
        shape: l.bias.shape().to_vec(),
        data: l.bias.as_slice().expect("standard layout"),
    });
}

fn linear_muts<'a>(out: &mut Vec<ParamMut<'a>>, name: &str, l: &'a mut Linear) {
    out.push(ParamMut {
        name: name.into(),
        kind: ParamKind::Matrix,
        shape: l.weight.shape().to_vec(),
        data: l.weight.as_slice_mut().expect("standard layout"),
    });
    out.push(ParamMut {
        name: format!("{name}.bias"),
        kind: ParamKind::Bias,
        shape: l.bias.shape().to_vec(),
        data: l.bias.as_slice_mut().expect("standard layout"),
    });
}

impl Parameters for ProbeWeights {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        if let Some(h) = &self.hidden {
            linear_refs(&mut out, "hidden", h);
        }
        linear_refs(&mut out, "output", &self.output);
        out
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        if let Some(h) = &mut self.hidden {
            linear_muts(&mut out, "hidden", h);
        }
        linear_muts(&mut out, "output", &mut self.output);
        out
    }
}

struct Activations {
    standardized: Array2<f64>,
    pre_hidden: Option<Array2<f64>>,
    features: Array2<f64>,
    logits: Array2<f64>,
}

fn forward(p: &ProbeWeights, x: &Array2<f64>) -> Activations {
    let standardized = (x - &p.mean) * &p.inv_std;
    let (pre_hidden, features) = match &p.hidden {
        Some(h) => {
            let pre = standardized.dot(&h.weight) + &h.bias;
            let act = pre.mapv(gelu);
            (Some(pre), act)
        }
        None => (None, standardized.clone()),
    };
    let logits = features.dot(&p.output.weight) + &p.output.bias;
    Activations { standardized, pre_hidden, features, logits }
}

fn check(embeddings: &Array2<f64>, labels: &[usize]) -> Result<(), ProbeError> {
    if embeddings.nrows() != labels.len() {
        return Err(ProbeError::LabelCount { rows: embeddings.nrows(), labels: labels.len() });
    }
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    Ok(())
}

fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Linear {
    let limit = (6.0 / (inputs + outputs) as f64).sqrt();
    Linear {
        weight: Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-limit..limit)),
        bias: Array1::zeros(outputs),
    }
}

/// Trains a probe with full-batch AdamW on plain cross-entropy and returns
/// it with its accuracy on the training data. Classes are `0..=max(label)`.
pub fn fit_probe(
    embeddings: &Array2<f64>,
    labels: &[usize],
    config: &ProbeConfig,
) -> Result<(ProbeWeights, f64), ProbeError> {
    check(embeddings, labels)?;
    let n = embeddings.nrows();
    if n < 2 {
        return Err(ProbeError::TooFew);
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(ProbeError::SingleClass);
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let dim = embeddings.ncols();

    let mean = embeddings.mean_axis(Axis(0)).unwrap();
    let inv_std = embeddings.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hidden = (config.hidden_units > 0).then(|| glorot(dim, config.hidden_units, &mut rng));
    let out_in = if config.hidden_units > 0 { config.hidden_units } else { dim };
    let output = glorot(out_in, n_classes, &mut rng);
    let mut probe = ProbeWeights { mean, inv_std, hidden, output };

    let mut opt = AdamW::new(&probe, AdamWConfig { weight_decay: config.weight_decay, ..Default::default() });
    let scale = 1.0 / n as f64;
    for _ in 0..config.epochs {
        let act = forward(&probe, embeddings);
        let mut dlogits = Array2::zeros(act.logits.raw_dim());
        for ((mut d, logits), &label) in dlogits.rows_mut().into_iter().zip(act.logits.rows()).zip(labels) {
            d.assign(&(cross_entropy(logits, label).1 * scale));
        }
        let mut grads = probe.clone();
        grads.output.weight.assign(&act.features.t().dot(&dlogits));
        grads.output.bias.assign(&dlogits.sum_axis(Axis(0)));
        if let (Some(_), Some(pre), Some(gh)) = (&probe.hidden, &act.pre_hidden, &mut grads.hidden) {
            let mut dpre = dlogits.dot(&probe.output.weight.t());
            dpre.zip_mut_with(pre, |d, &a| *d *= gelu_grad(a));
            gh.weight.assign(&act.standardized.t().dot(&dpre));
            gh.bias.assign(&dpre.sum_axis(Axis(0)));
        }
        opt.step(&mut probe, &grads, config.lr);
    }
    let acc = evaluate_probe(&probe, embeddings, labels)?;
    Ok((probe, acc))
}

pub fn predict(probe: &ProbeWeights, embeddings: &Array2<f64>) -> Result<Vec<usize>, ProbeError> {
    if embeddings.ncols() != probe.input_dim() {
        return Err(ProbeError::Width { expected: probe.input_dim(), got: embeddings.ncols() });
    }
    let logits = forward(probe, embeddings).logits;
    Ok(logits
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0))
        .collect())
}

/// Exact-match fraction; 0 for an empty set.
pub fn evaluate_probe(probe: &ProbeWeights, embeddings: &Array2<f64>, labels: &[usize]) -> Result<f64, ProbeError> {
    check(embeddings, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let preds = predict(probe, embeddings)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn separable_toy_is_perfect() {
        let x = arr2(&[[0.0, 0.1], [0.2, -0.1], [0.1, 0.3], [2.0, 2.1], [2.2, 1.9], [1.8, 2.3]]);
        let y = [0, 0, 0, 1, 1, 1];
        for hidden in [0, 8] {
            let (p, acc) = fit_probe(&x, &y, &ProbeConfig { hidden_units: hidden, ..Default::default() }).unwrap();
            assert_eq!(acc, 1.0);
            assert_eq!(evaluate_probe(&p, &x, &y).unwrap(), 1.0);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let x = arr2(&[[0.0], [1.0]]);
        assert_eq!(fit_probe(&x, &[1, 1], &ProbeConfig::default()).unwrap_err(), ProbeError::SingleClass);
        assert_eq!(
            fit_probe(&x.slice(ndarray::s![..1, ..]).to_owned(), &[0], &ProbeConfig::default()).unwrap_err(),
            ProbeError::TooFew
        );
        assert!(matches!(fit_probe(&x, &[0], &ProbeConfig::default()), Err(ProbeError::LabelCount { .. })));
    }

    #[test]
    fn constant_probe_scores_majority_fraction() {
        let probe = ProbeWeights {
            mean: Array1::zeros(2),
            inv_std: Array1::ones(2),
            hidden: None,
            output: Linear { weight: Array2::zeros((2, 3)), bias: ndarray::arr1(&[0.0, 1.0, 0.0]) },
        };
        let x = Array2::zeros((5, 2));
        assert_eq!(evaluate_probe(&probe, &x, &[1, 1, 1, 0, 2]).unwrap(), 0.6);
        assert_eq!(evaluate_probe(&probe, &x, &[0, 2, 0, 0, 2]).unwrap(), 0.0);
        assert!(matches!(evaluate_probe(&probe, &Array2::zeros((5, 3)), &[0; 5]), Err(ProbeError::Width { .. })));
    }
}
