use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioBuffer, DspError};

/// What goes into the mel filterbank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    Power,
    Magnitude,
}

/// MFCC front-end settings. The defaults produce the 40 x 98 encoder input
/// for a 1 s, 16 kHz segment.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    /// Seconds.
    pub window_length: f64,
    /// Seconds.
    pub hop_length: f64,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fft_size: usize,
    pub log_floor: f64,
    pub spectrum: SpectrumKind,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_length: 0.030,
            hop_length: 0.010,
            n_mels: 40,
            n_mfcc: 40,
            fft_size: 512,
            log_floor: 1e-10,
            spectrum: SpectrumKind::Power,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_length * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_length * self.sample_rate as f64).round() as usize
    }

    /// Frames produced for `n` samples without centering.
    pub fn frames_for(&self, n: usize) -> usize {
        let win = self.window_samples();
        if n < win {
            0
        } else {
            (n - win) / self.hop_samples() + 1
        }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: &str| Err(DspError::BadConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.window_samples() == 0 || self.hop_samples() == 0 {
            return bad("window and hop must span at least one sample");
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return bad("need 0 < n_mfcc <= n_mels");
        }
        if self.fft_size < self.window_samples() {
            return bad("fft_size must cover the window");
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return bad("log_floor must be positive");
        }
        Ok(())
    }

    /// Parses the `key=value` text form written by [`fmt::Display`].
    /// Missing keys keep their defaults; `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<Self, DspError> {
        let mut c = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DspError::BadConfig(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || DspError::BadConfig(format!("line {}: bad value for {key}", lineno + 1));
            match key {
                "sample_rate" => c.sample_rate = value.parse().map_err(|_| bad())?,
                "window_length" => c.window_length = value.parse().map_err(|_| bad())?,
                "hop_length" => c.hop_length = value.parse().map_err(|_| bad())?,
                "n_mels" => c.n_mels = value.parse().map_err(|_| bad())?,
                "n_mfcc" => c.n_mfcc = value.parse().map_err(|_| bad())?,
                "fft_size" => c.fft_size = value.parse().map_err(|_| bad())?,
                "log_floor" => c.log_floor = value.parse().map_err(|_| bad())?,
                "spectrum" => c.spectrum = value.parse()?,
                "mel_scale" | "window" => {
                    if !matches!(value, "htk" | "hann") {
                        return Err(DspError::BadConfig(format!("unsupported {key}={value}")));
                    }
                }
                other => return Err(DspError::BadConfig(format!("unknown key {other}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for MfccConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sample_rate={}", self.sample_rate)?;
        writeln!(f, "window_length={}", self.window_length)?;
        writeln!(f, "hop_length={}", self.hop_length)?;
        writeln!(f, "n_mels={}", self.n_mels)?;
        writeln!(f, "n_mfcc={}", self.n_mfcc)?;
        writeln!(f, "fft_size={}", self.fft_size)?;
        writeln!(f, "log_floor={:e}", self.log_floor)?;
        writeln!(f, "spectrum={}", self.spectrum)?;
        writeln!(f, "mel_scale=htk")?;
        writeln!(f, "window=hann")
    }
}

impl fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectrumKind::Power => "power",
            SpectrumKind::Magnitude => "magnitude",
        })
    }
}

impl FromStr for SpectrumKind {
    type Err = DspError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power" => Ok(Self::Power),
            "magnitude" => Ok(Self::Magnitude),
            _ => Err(DspError::BadConfig(format!("unknown spectrum kind {s}"))),
        }
    }
}

/// Cepstral coefficients of one segment, `n_mfcc x frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mfcc {
    pub values: Array2<f64>,
}

impl Mfcc {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn n_coeffs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-mel filterbank, `n_mels x (fft_size/2 + 1)`, spanning
/// 0 Hz to Nyquist with unit peaks.
pub fn mel_filterbank(config: &MfccConfig) -> Array2<f64> {
    let n_bins = config.fft_size / 2 + 1;
    let nyquist = config.sample_rate as f64 / 2.0;
    let (lo, hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
    let edges: Vec<f64> =
        (0..config.n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64)).collect();
    let bin_hz = config.sample_rate as f64 / config.fft_size as f64;
    Array2::from_shape_fn((config.n_mels, n_bins), |(m, k)| {
        let f = k as f64 * bin_hz;
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let rising = (f - left) / (center - left);
        let falling = (right - f) / (right - center);
        rising.min(falling).max(0.0)
    })
}

fn hann(n: usize) -> Vec<f64> {
    // periodic form
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

fn check_segment(segment: &AudioBuffer, config: &MfccConfig) -> Result<(), DspError> {
    config.validate()?;
    let expected = config.sample_rate as usize;
    if segment.sample_rate != config.sample_rate || segment.len() != expected {
        return Err(DspError::SegmentShape { expected, got: segment.len(), rate: config.sample_rate });
    }
    Ok(())
}

/// Log mel energies before the DCT, `n_mels x frames`.
pub fn log_mel(segment: &AudioBuffer, config: &MfccConfig) -> Result<Array2<f64>, DspError> {
    check_segment(segment, config)?;
    let win = config.window_samples();
    let hop = config.hop_samples();
    let frames = config.frames_for(segment.len());
    let window = hann(win);
    let bank = mel_filterbank(config);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.fft_size);
    let n_bins = config.fft_size / 2 + 1;

    let mut out = Array2::zeros((config.n_mels, frames));
    let mut buf = vec![Complex::new(0.0, 0.0); config.fft_size];
    let mut spec = Array1::zeros(n_bins);
    for t in 0..frames {
        let frame = &segment.samples[t * hop..t * hop + win];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            b.re = x * w;
        }
        fft.process(&mut buf);
        for (s, c) in spec.iter_mut().zip(&buf[..n_bins]) {
            *s = match config.spectrum {
                SpectrumKind::Power => c.norm_sqr(),
                SpectrumKind::Magnitude => c.norm(),
            };
        }
        let energies = bank.dot(&spec);
        for (m, e) in energies.iter().enumerate() {
            out[[m, t]] = (e + config.log_floor).ln();
        }
    }
    Ok(out)
}

/// Orthonormal DCT-II of a vector.
pub fn dct_ii_ortho(x: ArrayView1<f64>) -> Array1<f64> {
    let n = x.len();
    Array1::from_shape_fn(n, |k| {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        scale
            * x.iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .sum::<f64>()
    })
}

/// Inverse of [`dct_ii_ortho`] (orthonormal DCT-III).
pub fn idct_ii_ortho(c: ArrayView1<f64>) -> Array1<f64> {
    let n = c.len();
    Array1::from_shape_fn(n, |i| {
        c.iter()
            .enumerate()
            .map(|(k, &v)| {
                let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                scale * v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
            })
            .sum()
    })
}

fn dct_matrix(n_out: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_out, n), |(k, i)| {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// MFCCs of one 1 s segment: `n_mfcc x frames` (40 x 98 by default).
pub fn mfcc(segment: &AudioBuffer, config: &MfccConfig) -> Result<Mfcc, DspError> {
    let logmel = log_mel(segment, config)?;
    Ok(Mfcc::new(dct_matrix(config.n_mfcc, config.n_mels).dot(&logmel)))
}
