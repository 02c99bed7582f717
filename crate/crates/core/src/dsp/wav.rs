use std::path::Path;

use super::AudioClip;
use crate::error::{Result, VocoderError};

fn wav_err(path: &Path, e: hound::Error) -> VocoderError {
    match e {
        hound::Error::IoError(source) => VocoderError::io(path, source),
        other => VocoderError::Wav(format!("{}: {other}", path.display())),
    }
}

/// Reads a 16-bit PCM mono WAV, mapping sample words to `[-1, 1)` by `/32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(VocoderError::Wav(format!(
            "{}: mono required, file has {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(VocoderError::Wav(format!(
            "{}: 16-bit integer PCM required, file is {}-bit {:?}",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|w| w as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e))?;
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Quantizes a sample to a 16-bit word: round half away from zero, clamp.
pub(crate) fn quantize(sample: f32) -> i16 {
    (sample as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a 16-bit PCM mono WAV at the clip's sample rate.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    if let Some(i) = clip.samples.iter().position(|s| !s.is_finite()) {
        return Err(VocoderError::Wav(format!("sample {i} is not finite")));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in &clip.samples {
        writer.write_sample(quantize(s)).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}
