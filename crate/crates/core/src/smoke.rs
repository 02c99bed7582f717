//! Deterministic speech-like test audio.
//!
//! Clips are voiced harmonic tones with a drifting pitch and moving
//! formant-like spectral peaks, shaped into syllables, with light noise.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{write_wav, AudioClip, SAMPLE_RATE};
use crate::error::{Result, VocoderError};

/// Synthesizes `samples` samples at 24 kHz from `seed`.
pub fn speech_like_clip(seed: u64, samples: usize) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = SAMPLE_RATE as f64;
    let tau = std::f64::consts::TAU;
    let f0_base = rng.gen_range(100.0..220.0);
    let f0_depth = rng.gen_range(0.05..0.2);
    let f0_rate = rng.gen_range(1.0..3.0);
    let syllable_rate = rng.gen_range(3.0..5.5);
    let formants: Vec<(f64, f64, f64)> = [(300.0, 900.0), (900.0, 2300.0), (2300.0, 3200.0)]
        .iter()
        .map(|&(lo, hi)| (rng.gen_range(lo..hi), rng.gen_range(0.1..0.6), rng.gen_range(0.3..1.5)))
        .collect();
    let noise_level = rng.gen_range(0.002..0.01);

    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(samples);
    for n in 0..samples {
        let t = n as f64 / sr;
        let f0 = f0_base * (1.0 + f0_depth * (tau * f0_rate * t).sin());
        phase = (phase + tau * f0 / sr) % tau;
        let envelope = (0.5 - 0.5 * (tau * syllable_rate * t).cos()).powf(1.5);
        let harmonics = ((sr / 2.0 - 500.0) / f0).floor() as usize;
        let mut v = 0.0;
        for k in 1..=harmonics {
            let fk = k as f64 * f0;
            let mut amp = 0.02 / k as f64;
            for &(center, drift, rate) in &formants {
                let c = center * (1.0 + drift * 0.3 * (tau * rate * t).sin());
                let bw = 80.0 + 0.1 * c;
                amp += (-((fk - c) / bw).powi(2)).exp() / (1.0 + c / 1000.0);
            }
            v += amp * (k as f64 * phase).sin();
        }
        out.push(envelope * v + noise_level * rng.gen_range(-1.0..1.0));
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    AudioClip::new(out.iter().map(|v| (0.5 * v / peak) as f32).collect(), SAMPLE_RATE)
}

/// Writes `count` clips named `smoke_XX.wav` into `dir`.
pub fn write_smoke_dataset(dir: impl AsRef<Path>, count: usize, samples: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| VocoderError::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("smoke_{i:02}.wav"));
            write_wav(&path, &speech_like_clip(seed.wrapping_add(i as u64), samples))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = speech_like_clip(4, 2400);
        assert_eq!(a, speech_like_clip(4, 2400));
        assert_ne!(a, speech_like_clip(5, 2400));
        assert_eq!(a.len(), 2400);
        let peak = a.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-6);
    }
}
