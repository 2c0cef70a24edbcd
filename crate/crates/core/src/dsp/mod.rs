//! Audio front end: WAV decoding, resampling, ceiling padding into 1 s
//! segments, and MFCC extraction.

mod mfcc;
mod resample;
mod wav;

pub use mfcc::{dct_ii_ortho, idct_ii_ortho, log_mel, mel_filterbank, mfcc, Mfcc, MfccConfig, SpectrumKind};
pub use resample::resample;
pub use wav::{decode_wav, encode_wav_pcm16};

use thiserror::Error;

/// Sample rate the encoder expects.
pub const TARGET_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV codec: {0}")]
    UnsupportedCodec(String),
    #[error("WAV file contains no samples")]
    EmptyData,
    #[error("audio buffer is empty")]
    EmptyAudio,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid sample rate {0}")]
    BadRate(u32),
    #[error("segment must hold {expected} samples at {rate} Hz, got {got}")]
    SegmentShape { expected: usize, got: usize, rate: u32 },
    #[error("invalid MFCC config: {0}")]
    BadConfig(String),
}

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Checks the invariants every consuming operation relies on.
    pub fn validate(&self) -> Result<(), DspError> {
        if self.sample_rate == 0 {
            return Err(DspError::BadRate(0));
        }
        if self.samples.is_empty() {
            return Err(DspError::EmptyAudio);
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(())
    }
}

/// Zero-pads to the next whole second and splits into 1 s segments.
pub fn pad_and_segment(audio: &AudioBuffer) -> Result<Vec<AudioBuffer>, DspError> {
    audio.validate()?;
    if audio.sample_rate != TARGET_RATE {
        return Err(DspError::BadRate(audio.sample_rate));
    }
    let seg = TARGET_RATE as usize;
    let n_segments = audio.len().div_ceil(seg);
    let mut padded = audio.samples.clone();
    padded.resize(n_segments * seg, 0.0);
    Ok(padded.chunks_exact(seg).map(|c| AudioBuffer::new(c.to_vec(), TARGET_RATE)).collect())
}

/// Resamples to 16 kHz when needed, segments, and computes one MFCC per
/// segment. Segments are processed in parallel.
pub fn audio_to_mfccs(audio: &AudioBuffer, config: &MfccConfig) -> Result<Vec<Mfcc>, DspError> {
    audio.validate()?;
    let audio =
        if audio.sample_rate == config.sample_rate { audio.clone() } else { resample(audio, config.sample_rate)? };
    let segments = pad_and_segment(&audio)?;
    crate::parallel::map_slice(&segments, |s| mfcc(s, config)).into_iter().collect()
}
