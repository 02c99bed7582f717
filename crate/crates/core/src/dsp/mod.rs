//! Framing, windows, STFT, mel features and WAV I/O.

pub(crate) mod mel;
mod wav;

use autodiff::fft::{Fft, RfftScratch};
use autodiff::{Graph, PadMode, Real, Tensor, Var};

pub use crate::config::{StftConfig, Window};
use crate::error::{Result, VocoderError};
pub use mel::{hz_to_mel, mel_features, mel_to_hz, MelFilterbank, MelSpectrogram, LOG_MEL_OFFSET};
pub use wav::{read_wav, write_wav};

/// Floor applied to STFT magnitudes before taking logs.
pub const MAGNITUDE_FLOOR: f64 = 1e-7;

pub const SAMPLE_RATE: u32 = 24_000;

/// Mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioClip { samples, sample_rate }
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

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }
}

/// Periodic (DFT-even) window of `len` samples.
pub fn window(kind: Window, len: usize) -> Vec<f64> {
    match kind {
        Window::Hann => (0..len)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
            .collect(),
    }
}

/// Overlapping frames of the last axis: `[..., T] -> [..., n, frame_length]`.
pub fn frame_signal<T: Real>(g: &mut Graph<T>, x: Var, frame_length: usize, hop_length: usize) -> Result<Var> {
    Ok(g.frame(x, frame_length, hop_length)?)
}

/// Differentiable STFT of the last axis. Returns a packed spectrum of shape
/// `[..., frames, 2, bins]`: real parts in plane 0, imaginary in plane 1.
pub fn stft<T: Real>(g: &mut Graph<T>, x: Var, cfg: &StftConfig) -> Result<Var> {
    cfg.validate()?;
    let len = g.shape(x).last().copied().unwrap_or(0);
    let x = if cfg.center {
        let pad = cfg.fft_size / 2;
        if len <= pad {
            return Err(VocoderError::Data(format!(
                "signal of {len} samples too short for centered stft with fft {}",
                cfg.fft_size
            )));
        }
        g.pad1d(x, pad, pad, PadMode::Reflect)?
    } else {
        x
    };
    let padded = g.shape(x).last().copied().unwrap_or(0);
    if padded < cfg.win_length {
        return Err(VocoderError::Data(format!(
            "signal of {len} samples shorter than one stft window ({})",
            cfg.win_length
        )));
    }
    let frames = g.frame(x, cfg.win_length, cfg.hop_length)?;
    let w: Vec<T> = window(cfg.window, cfg.win_length).into_iter().map(T::from_f64).collect();
    let w = g.constant([cfg.win_length], w)?;
    let windowed = g.mul(frames, w)?;
    Ok(g.rfft(windowed, cfg.fft_size)?)
}

/// `max(|X|, floor)` of a packed spectrum: `[..., 2, bins] -> [..., bins]`.
pub fn magnitude<T: Real>(g: &mut Graph<T>, spec: Var, floor: f64) -> Result<Var> {
    Ok(g.complex_abs(spec, floor)?)
}

/// Plain (non-differentiable) STFT result.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `[frames, bins]`
    pub real: Tensor<f64>,
    /// `[frames, bins]`
    pub imag: Tensor<f64>,
    pub config: StftConfig,
}

impl Spectrogram {
    /// Computes the STFT of a signal without recording a graph.
    pub fn compute(samples: &[f64], cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        let signal: Vec<f64> = if cfg.center {
            let pad = cfg.fft_size / 2;
            if samples.len() <= pad {
                return Err(VocoderError::Data(format!(
                    "signal of {} samples too short for centered stft with fft {}",
                    samples.len(),
                    cfg.fft_size
                )));
            }
            reflect_pad(samples, pad)
        } else {
            samples.to_vec()
        };
        let frames = cfg.frames(samples.len()).ok_or_else(|| {
            VocoderError::Data(format!(
                "signal of {} samples shorter than one stft window ({})",
                samples.len(),
                cfg.win_length
            ))
        })?;
        let bins = cfg.bins();
        let plan = Fft::<f64>::new(cfg.fft_size)?;
        let w = window(cfg.window, cfg.win_length);
        let mut scratch = RfftScratch::new();
        let mut real = vec![0.0; frames * bins];
        let mut imag = vec![0.0; frames * bins];
        let mut buf = vec![0.0; cfg.win_length];
        for f in 0..frames {
            let start = f * cfg.hop_length;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = signal[start + i] * w[i];
            }
            plan.rfft(
                &buf,
                &mut real[f * bins..(f + 1) * bins],
                &mut imag[f * bins..(f + 1) * bins],
                &mut scratch,
            );
        }
        Ok(Spectrogram {
            real: Tensor::new([frames, bins], real)?,
            imag: Tensor::new([frames, bins], imag)?,
            config: *cfg,
        })
    }

    pub fn frames(&self) -> usize {
        self.real.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.real.shape()[1]
    }

    /// `max(sqrt(re^2 + im^2), floor)` per bin, row-major `[frames, bins]`.
    pub fn magnitude(&self, floor: f64) -> Vec<f64> {
        self.real
            .data()
            .iter()
            .zip(self.imag.data())
            .map(|(&r, &i)| r.hypot(i).max(floor))
            .collect()
    }
}

/// Reflect padding excluding the edge sample; `pad < samples.len()`.
pub(crate) fn reflect_pad(samples: &[f64], pad: usize) -> Vec<f64> {
    let n = samples.len() as isize;
    (-(pad as isize)..n + pad as isize)
        .map(|p| {
            let mut s = p.abs();
            if s >= n {
                s = 2 * (n - 1) - s;
            }
            samples[s as usize]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_signal_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.constant([4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = frame_signal(&mut g, x, 2, 2).unwrap();
        assert_eq!(g.shape(f), &[2, 2]);
        assert_eq!(g.value(f), &[1.0, 2.0, 3.0, 4.0]);
        let ones = frame_signal(&mut g, x, 1, 1).unwrap();
        assert_eq!(g.shape(ones), &[4, 1]);

        let long = g.constant([24_000], vec![0.0; 24_000]).unwrap();
        let f = frame_signal(&mut g, long, 240, 120).unwrap();
        assert_eq!(g.shape(f)[0], (24_000 - 240) / 120 + 1);
        assert_eq!(g.shape(f)[0], 199);

        let short = g.constant([1], vec![0.0]).unwrap();
        assert!(frame_signal(&mut g, short, 2, 1).is_err());
    }

    #[test]
    fn periodic_hann() {
        let w = window(Window::Hann, 4);
        let expect = [0.0, 0.5, 1.0, 0.5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_signal_has_zero_spectrum() {
        let mut g = Graph::<f64>::new();
        let x = g.constant([1024], vec![0.0; 1024]).unwrap();
        let s = stft(&mut g, x, &StftConfig::new(512, 240, 512)).unwrap();
        assert_eq!(g.shape(s), &[3, 2, 257]);
        assert!(g.value(s).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn magnitude_examples() {
        let mut g = Graph::<f64>::new();
        let s = g.constant([1, 2, 2], vec![3.0, 0.0, 4.0, 0.0]).unwrap();
        let m = magnitude(&mut g, s, MAGNITUDE_FLOOR).unwrap();
        assert_eq!(g.value(m), &[5.0, MAGNITUDE_FLOOR]);
    }

    #[test]
    fn graph_and_plain_stft_agree() {
        let x: Vec<f64> = (0..2000).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.3).collect();
        for center in [false, true] {
            let cfg = StftConfig::new(256, 100, 200).centered(center);
            let plain = Spectrogram::compute(&x, &cfg).unwrap();
            let mut g = Graph::<f64>::new();
            let v = g.constant([x.len()], x.clone()).unwrap();
            let s = stft(&mut g, v, &cfg).unwrap();
            let frames = plain.frames();
            assert_eq!(g.shape(s), &[frames, 2, 129]);
            let packed = g.value(s);
            for f in 0..frames {
                for b in 0..129 {
                    assert_eq!(packed[f * 258 + b], plain.real.data()[f * 129 + b]);
                    assert_eq!(packed[f * 258 + 129 + b], plain.imag.data()[f * 129 + b]);
                }
            }
        }
    }

    #[test]
    fn reflect_pad_convention() {
        assert_eq!(reflect_pad(&[1.0, 2.0, 3.0], 1), vec![2.0, 1.0, 2.0, 3.0, 2.0]);
    }
}
