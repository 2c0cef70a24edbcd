use super::TrainConfig;

/// Learning rate at a fractional epoch: linear warmup from 0 to the peak,
/// then half-cosine decay to 0 at the last epoch. Epochs outside
/// `[0, epochs]` are clamped.
pub fn lr_at(epoch: f64, config: &TrainConfig) -> f64 {
    let total = config.epochs as f64;
    let warmup = config.warmup_epochs as f64;
    let e = epoch.clamp(0.0, total);
    if e < warmup {
        config.peak_lr * e / warmup
    } else {
        let progress = (e - warmup) / (total - warmup);
        0.5 * config.peak_lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
