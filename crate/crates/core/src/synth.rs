//! Waveform synthesis from mel features with a trained generator.

use std::path::Path;
use std::time::Instant;

use crate::checkpoint;
use crate::config::{MelConfig, TrainConfig};
use crate::container::Container;
use crate::dsp::{write_wav, AudioClip, MelSpectrogram, SAMPLE_RATE};
use crate::error::{Result, VocoderError};
use crate::features::load_features;
use crate::generator::Generator;

pub struct Synthesizer {
    generator: Generator<f32>,
    mel: MelConfig,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub clip: AudioClip,
    pub frames: usize,
    pub seconds: f64,
}

impl SynthOutput {
    /// Generated samples per wall-clock second, relative to 24 kHz.
    pub fn realtime_factor(&self) -> f64 {
        if self.seconds <= 0.0 {
            return f64::INFINITY;
        }
        self.clip.len() as f64 / self.seconds / SAMPLE_RATE as f64
    }
}

impl Synthesizer {
    pub fn new(generator: Generator<f32>, mel: MelConfig) -> Self {
        Synthesizer { generator, mel }
    }

    pub fn load(ckpt: impl AsRef<Path>) -> Result<Self> {
        let ckpt = ckpt.as_ref();
        let cfg: TrainConfig = checkpoint::stored_config(&Container::load(ckpt)?)?;
        Ok(Synthesizer {
            generator: checkpoint::load_generator(ckpt)?,
            mel: cfg.mel,
        })
    }

    pub fn mel_config(&self) -> &MelConfig {
        &self.mel
    }

    pub fn synthesize(&self, mel: &MelSpectrogram) -> Result<SynthOutput> {
        if mel.frames() == 0 {
            return Err(VocoderError::Data("mel spectrogram has no frames".into()));
        }
        let start = Instant::now();
        let samples = self.generator.infer(mel)?;
        let seconds = start.elapsed().as_secs_f64();
        Ok(SynthOutput {
            clip: AudioClip::new(samples, SAMPLE_RATE),
            frames: mel.frames(),
            seconds,
        })
    }

    /// Synthesizes from a feature cache or, for WAV input, from features
    /// extracted from it, and writes a 16-bit WAV.
    pub fn synthesize_file(&self, input: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<SynthOutput> {
        let mel = load_features(input, &self.mel)?;
        let result = self.synthesize(&mel)?;
        write_wav(out, &result.clip)?;
        Ok(result)
    }
}
