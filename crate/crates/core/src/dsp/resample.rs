use super::{AudioBuffer, DspError};

const TAPS: usize = 16;
const KAISER_BETA: f64 = 8.0;
const ROLLOFF: f64 = 0.95;

/// Polyphase windowed-sinc resampler (Kaiser window, 16 taps per phase).
///
/// Every phase's taps are normalized to sum to one and out-of-range input
/// indices replicate the edge sample, so constant signals pass unchanged.
pub fn resample(audio: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, DspError> {
    audio.validate()?;
    if target_rate == 0 {
        return Err(DspError::BadRate(0));
    }
    let source_rate = audio.sample_rate;
    if source_rate == target_rate {
        return Ok(audio.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let len = audio.len() as u64;
    // round(len * target / source)
    let out_len = ((len as u128 * target_rate as u128 * 2 + source_rate as u128) / (2 * source_rate as u128)) as usize;

    let cutoff = (up as f64 / down as f64).min(1.0) * ROLLOFF;
    let table = PhaseTable::new(up as usize, cutoff);
    let input = &audio.samples;
    let last = input.len() as i64 - 1;
    let half = (TAPS / 2) as i64;

    let samples = (0..out_len as u64)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as i64;
            let weights = table.phase((pos % up) as usize);
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let idx = (base + k as i64 - half + 1).clamp(0, last);
                    w * input[idx as usize]
                })
                .sum()
        })
        .collect();
    Ok(AudioBuffer::new(samples, target_rate))
}

struct PhaseTable {
    weights: Vec<f64>,
}

impl PhaseTable {
    fn new(phases: usize, cutoff: f64) -> Self {
        let half = (TAPS / 2) as f64;
        let norm = bessel_i0(KAISER_BETA);
        let mut weights = Vec::with_capacity(phases * TAPS);
        for p in 0..phases {
            let frac = p as f64 / phases as f64;
            let start = weights.len();
            for k in 0..TAPS {
                // tap k sits at input offset (k - half + 1) from the base sample
                let x = (k as f64 - half + 1.0) - frac;
                let r = x / half;
                let window = if r.abs() >= 1.0 { 0.0 } else { bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm };
                weights.push(cutoff * sinc(cutoff * x) * window);
            }
            let sum: f64 = weights[start..].iter().sum();
            weights[start..].iter_mut().for_each(|w| *w /= sum);
        }
        Self { weights }
    }

    fn phase(&self, p: usize) -> &[f64] {
        &self.weights[p * TAPS..(p + 1) * TAPS]
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
