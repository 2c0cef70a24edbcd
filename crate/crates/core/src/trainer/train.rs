use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{augment, backward, lr_at, AdamW, AdamWConfig, TrainConfig, TrainError};
use crate::dsp::Mfcc;
use crate::encoder::{classify, init_weights, EncoderConfig, ModelWeights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub optimizer: AdamW,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: Vec<StepLog>,
}

impl TrainOutcome {
    /// `epoch,step,lr,loss` CSV with a header row.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,step,lr,loss\n");
        for l in &self.steps {
            s.push_str(&format!("{},{},{:e},{:e}\n", l.epoch, l.step, l.lr, l.loss));
        }
        s
    }
}

/// Trains a freshly initialized encoder (seeded from `config.seed`).
pub fn train(
    dataset: &[(Mfcc, usize)],
    encoder: EncoderConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let weights = init_weights(encoder, config.seed)?;
    train_with_init(dataset, weights, config)
}

/// The full loop: per-epoch seeded shuffling, masking augmentation,
/// stochastic depth, AdamW, warmup plus cosine schedule evaluated at the
/// fractional epoch of each step.
pub fn train_with_init(
    dataset: &[(Mfcc, usize)],
    mut weights: ModelWeights,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Empty);
    }
    let n_classes = weights.config.n_classes;
    if let Some((index, (_, label))) = dataset.iter().enumerate().find(|(_, (_, l))| *l >= n_classes) {
        return Err(TrainError::Label { index, label: *label, n_classes });
    }
    let mut optimizer = AdamW::new(&weights, AdamWConfig { weight_decay: config.weight_decay, ..Default::default() });
    // separate from the init stream so data order does not depend on model size
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_da7a_0000_0001);
    let steps_per_epoch = dataset.len().div_ceil(config.batch_size);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = Vec::with_capacity(config.epochs * steps_per_epoch);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let lr = lr_at(epoch as f64 + b as f64 / steps_per_epoch as f64, config);
            let aug_seeds: Vec<u64> = idx.iter().map(|_| rng.random()).collect();
            let batch: Vec<(Mfcc, usize)> = crate::parallel::map_indexed(idx.len(), |k| {
                let (x, label) = &dataset[idx[k]];
                (augment(x, config, &mut ChaCha8Rng::seed_from_u64(aug_seeds[k])), *label)
            });
            let (loss, tape) = backward(&batch, &weights, config, &mut rng)?;
            optimizer.step(&mut weights, &tape.0, lr);
            epoch_loss += loss * idx.len() as f64;
            steps.push(StepLog { epoch, step: steps.len(), lr, loss });
        }
        epoch_losses.push(epoch_loss / dataset.len() as f64);
    }
    Ok(TrainOutcome { weights, optimizer, epoch_losses, steps })
}

/// Fraction of examples whose argmax logit equals the label.
pub fn accuracy(weights: &ModelWeights, dataset: &[(Mfcc, usize)]) -> Result<f64, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Empty);
    }
    let hits = crate::parallel::map_slice(dataset, |(x, label)| {
        classify(x, weights).map(|logits| {
            let best = logits.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
            best == Some(*label)
        })
    });
    let mut correct = 0;
    for h in hits {
        correct += h? as usize;
    }
    Ok(correct as f64 / dataset.len() as f64)
}
