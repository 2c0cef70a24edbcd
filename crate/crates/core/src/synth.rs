//! Synthetic two-class audio (pure tones vs white noise) for smoke tests
//! and the ablation harness.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::AudioBuffer;

pub const SINE_LABEL: usize = 0;
pub const NOISE_LABEL: usize = 1;

/// Tone with random frequency in [200, 2000) Hz, random phase and amplitude.
pub fn sine_clip<R: Rng>(rng: &mut R, seconds: f64, rate: u32) -> AudioBuffer {
    let freq = rng.random_range(200.0..2000.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let amp = rng.random_range(0.3..0.8);
    let n = (seconds * rate as f64).round() as usize;
    let samples = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64 + phase).sin()).collect();
    AudioBuffer::new(samples, rate)
}

/// Uniform white noise with random amplitude.
pub fn noise_clip<R: Rng>(rng: &mut R, seconds: f64, rate: u32) -> AudioBuffer {
    let amp = rng.random_range(0.3..0.8);
    let n = (seconds * rate as f64).round() as usize;
    AudioBuffer::new((0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect(), rate)
}

/// `per_class` tones followed by `per_class` noise clips, 1 s at 16 kHz.
pub fn sine_vs_noise(per_class: usize, seed: u64) -> Vec<(AudioBuffer, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * per_class);
    for _ in 0..per_class {
        out.push((sine_clip(&mut rng, 1.0, 16_000), SINE_LABEL));
    }
    for _ in 0..per_class {
        out.push((noise_clip(&mut rng, 1.0, 16_000), NOISE_LABEL));
    }
    out
}
