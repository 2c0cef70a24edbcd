use std::io::Cursor;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, DspError};

/// Decodes a RIFF/WAVE byte stream (PCM16 or float32) into mono audio.
///
/// Channels are averaged; PCM16 is scaled by 1/32768.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, DspError> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_header_err)?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(DspError::MalformedHeader("zero channels".into()));
    }
    if spec.sample_rate == 0 {
        return Err(DspError::MalformedHeader("zero sample rate".into()));
    }
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_data_err)?,
        (SampleFormat::Float, 32) => {
            reader.into_samples::<f32>().map(|s| s.map(|v| v as f64)).collect::<Result<_, _>>().map_err(map_data_err)?
        }
        (fmt, bits) => {
            return Err(DspError::UnsupportedCodec(format!("{fmt:?} {bits}-bit")));
        }
    };
    if interleaved.len() < channels {
        return Err(DspError::EmptyData);
    }
    let samples: Vec<f64> =
        interleaved.chunks_exact(channels).map(|frame| frame.iter().sum::<f64>() / channels as f64).collect();
    let audio = AudioBuffer::new(samples, spec.sample_rate);
    audio.validate().map_err(|e| match e {
        DspError::EmptyAudio => DspError::EmptyData,
        other => other,
    })?;
    Ok(audio)
}

fn map_header_err(e: hound::Error) -> DspError {
    match e {
        hound::Error::Unsupported => DspError::UnsupportedCodec("unsupported WAV format".into()),
        other => DspError::MalformedHeader(other.to_string()),
    }
}

fn map_data_err(e: hound::Error) -> DspError {
    DspError::MalformedHeader(format!("sample data: {e}"))
}

/// Writes mono audio as 16-bit PCM (clipped to [-1, 1)).
pub fn encode_wav_pcm16(audio: &AudioBuffer) -> Vec<u8> {
    let spec =
        WavSpec { channels: 1, sample_rate: audio.sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in &audio.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}
