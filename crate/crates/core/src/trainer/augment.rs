use rand::Rng;

use super::TrainConfig;
use crate::dsp::Mfcc;

/// Zeroes frames `start..start + width` (clipped to the matrix).
pub fn mask_time(x: &mut Mfcc, start: usize, width: usize) {
    let end = (start + width).min(x.n_frames());
    for t in start.min(end)..end {
        x.values.column_mut(t).fill(0.0);
    }
}

/// Zeroes coefficient rows `start..start + width` (clipped to the matrix).
pub fn mask_freq(x: &mut Mfcc, start: usize, width: usize) {
    let end = (start + width).min(x.n_coeffs());
    for f in start.min(end)..end {
        x.values.row_mut(f).fill(0.0);
    }
}

/// Time masks, then frequency masks. Each width is uniform on
/// `0..=max` and each start uniform over the positions that fit.
pub fn augment<R: Rng + ?Sized>(x: &Mfcc, config: &TrainConfig, rng: &mut R) -> Mfcc {
    let mut out = x.clone();
    for _ in 0..config.time_masks {
        let width = rng.random_range(0..=config.time_mask_max).min(out.n_frames());
        let start = rng.random_range(0..=out.n_frames() - width);
        mask_time(&mut out, start, width);
    }
    for _ in 0..config.freq_masks {
        let width = rng.random_range(0..=config.freq_mask_max).min(out.n_coeffs());
        let start = rng.random_range(0..=out.n_coeffs() - width);
        mask_freq(&mut out, start, width);
    }
    out
}
