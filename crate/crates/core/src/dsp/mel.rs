use autodiff::Tensor;

use super::{AudioClip, Spectrogram};
use crate::config::MelConfig;
use crate::error::{Result, VocoderError};

/// Added to mel energies before the log.
pub const LOG_MEL_OFFSET: f64 = 1e-6;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters spaced evenly on the mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    bins: usize,
    /// Row-major `[n_mels, bins]`.
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let bins = cfg.fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        let mut weights = vec![0.0; cfg.n_mels * bins];
        for m in 0..cfg.n_mels {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            for b in 0..bins {
                let f = b as f64 * bin_hz;
                let w = ((f - l) / (c - l)).min((r - f) / (r - c));
                weights[m * bins + b] = w.max(0.0);
            }
        }
        Ok(MelFilterbank {
            n_mels: cfg.n_mels,
            bins,
            weights,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.bins..(m + 1) * self.bins]
    }

    /// Mel energies of one magnitude frame.
    pub fn apply(&self, magnitude: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(magnitude).map(|(w, x)| w * x).sum();
        }
    }
}

/// Log-mel features, `values` shaped `[frames, n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Tensor<f64>,
    pub hop_length: usize,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn new(values: Tensor<f64>, hop_length: usize) -> Result<Self> {
        let shape = values.shape();
        if shape.len() != 2 || shape[0] == 0 {
            return Err(VocoderError::Data(format!(
                "mel spectrogram must be [frames >= 1, n_mels], got {shape:?}"
            )));
        }
        if !values.all_finite() {
            return Err(VocoderError::Data("mel spectrogram has non-finite values".into()));
        }
        let n_mels = shape[1];
        Ok(MelSpectrogram {
            values,
            hop_length,
            n_mels,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    /// Frames `start..end` as a new spectrogram.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames() {
            return Err(VocoderError::Data(format!(
                "mel frame range {start}..{end} out of bounds for {} frames",
                self.frames()
            )));
        }
        let data = self.values.data()[start * self.n_mels..end * self.n_mels].to_vec();
        MelSpectrogram::new(Tensor::new([end - start, self.n_mels], data)?, self.hop_length)
    }
}

/// `log(filterbank · |STFT| + 1e-6)` over the whole clip.
pub fn mel_features(clip: &AudioClip, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let fb = MelFilterbank::new(cfg)?;
    mel_features_with(clip, cfg, &fb)
}

pub(crate) fn mel_features_with(clip: &AudioClip, cfg: &MelConfig, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    if clip.sample_rate != cfg.sample_rate {
        return Err(VocoderError::Data(format!(
            "clip sample rate {} differs from mel config rate {}",
            clip.sample_rate, cfg.sample_rate
        )));
    }
    let spec = Spectrogram::compute(&clip.to_f64(), &cfg.stft())?;
    let mag = spec.magnitude(0.0);
    let bins = spec.bins();
    let frames = spec.frames();
    let mut values = vec![0.0; frames * cfg.n_mels];
    for (f, out) in values.chunks_exact_mut(cfg.n_mels).enumerate() {
        fb.apply(&mag[f * bins..(f + 1) * bins], out);
        for v in out.iter_mut() {
            *v = (*v + LOG_MEL_OFFSET).ln();
        }
    }
    MelSpectrogram::new(Tensor::new([frames, cfg.n_mels], values)?, cfg.hop_length)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 440.0, 1000.0, 12_000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn silence_maps_to_log_offset() {
        let clip = AudioClip::new(vec![0.0; 4800], 24_000);
        let mel = mel_features(&clip, &MelConfig::default()).unwrap();
        assert_eq!(mel.n_mels, 80);
        assert!(mel.values.data().iter().all(|&v| v == LOG_MEL_OFFSET.ln()));
    }

    #[test]
    fn one_second_centered_has_101_frames() {
        let clip = AudioClip::new(vec![0.1; 24_000], 24_000);
        let mel = mel_features(&clip, &MelConfig::default()).unwrap();
        assert_eq!(mel.frames(), 24_000 / 240 + 1);
        assert_eq!(mel.frames(), 101);
    }

    #[test]
    fn filterbank_covers_interior_bins() {
        let cfg = MelConfig::default();
        let fb = MelFilterbank::new(&cfg).unwrap();
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        for b in 0..fb.bins() {
            let f = b as f64 * bin_hz;
            if f > cfg.fmin && f < cfg.fmax {
                let covered = (0..fb.n_mels()).any(|m| fb.row(m)[b] > 0.0);
                assert!(covered, "bin {b} ({f} Hz) uncovered");
            }
        }
    }

    #[test]
    fn wrong_sample_rate_rejected() {
        let clip = AudioClip::new(vec![0.0; 4800], 16_000);
        assert!(mel_features(&clip, &MelConfig::default()).is_err());
    }
}
