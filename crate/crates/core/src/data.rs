//! WAV dataset scanning and random aligned crops.

use std::path::{Path, PathBuf};

use autodiff::{Real, Tensor};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::config::{MelConfig, TrainConfig};
use crate::dsp::mel::mel_features_with;
use crate::dsp::{read_wav, AudioClip, MelFilterbank, MelSpectrogram};
use crate::error::{Result, VocoderError};

/// One usable training file with its whole-file features.
#[derive(Debug, Clone)]
pub struct AudioItem {
    pub name: String,
    pub clip: AudioClip,
    pub mel: MelSpectrogram,
    /// Hex SHA-256 of the source bytes (or samples for in-memory clips).
    pub digest: String,
}

/// A batch of aligned features and waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    /// `[B, frames, n_mels]`
    pub mel: Tensor<T>,
    /// `[B, 1, frames * hop]`
    pub wave: Tensor<T>,
    /// `(item index, first frame)` per batch entry.
    pub picks: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<AudioItem>,
    clip_samples: usize,
    hop: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Lists `*.wav` files in `dir`, sorted by name.
pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| VocoderError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| VocoderError::io(dir, e))?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

impl Dataset {
    /// Loads every usable WAV in `dir`. Unusable files are skipped with a
    /// warning; it is an error if none remain.
    pub fn scan(dir: impl AsRef<Path>, cfg: &TrainConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let fb = MelFilterbank::new(&cfg.mel)?;
        let mut items = Vec::new();
        let mut rejected = Vec::new();
        let paths = list_wavs(dir)?;
        if paths.is_empty() {
            return Err(VocoderError::NoUsableFiles(vec![format!("{}: no input files", dir.display())]));
        }
        for path in paths {
            let loaded = std::fs::read(&path)
                .map_err(|e| VocoderError::io(&path, e))
                .and_then(|bytes| Ok((sha256_hex(&bytes), read_wav(&path)?)));
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            match loaded.and_then(|(digest, clip)| item(name.clone(), clip, digest, cfg, &fb)) {
                Ok(it) => items.push(it),
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    rejected.push(format!("{}: {e}", path.display()));
                }
            }
        }
        if items.is_empty() {
            return Err(VocoderError::NoUsableFiles(rejected));
        }
        Ok(Dataset {
            items,
            clip_samples: cfg.clip_samples,
            hop: cfg.mel.hop_length,
        })
    }

    /// Builds a dataset from in-memory clips under the same rules as
    /// [`Dataset::scan`].
    pub fn from_clips(clips: Vec<(String, AudioClip)>, cfg: &TrainConfig) -> Result<Self> {
        let fb = MelFilterbank::new(&cfg.mel)?;
        let mut items = Vec::new();
        let mut rejected = Vec::new();
        for (name, clip) in clips {
            let bytes: Vec<u8> = clip.samples.iter().flat_map(|s| s.to_le_bytes()).collect();
            match item(name.clone(), clip, sha256_hex(&bytes), cfg, &fb) {
                Ok(it) => items.push(it),
                Err(e) => rejected.push(format!("{name}: {e}")),
            }
        }
        if items.is_empty() {
            return Err(VocoderError::NoUsableFiles(rejected));
        }
        Ok(Dataset {
            items,
            clip_samples: cfg.clip_samples,
            hop: cfg.mel.hop_length,
        })
    }

    pub fn items(&self) -> &[AudioItem] {
        &self.items
    }

    pub fn clip_samples(&self) -> usize {
        self.clip_samples
    }

    /// Frames per crop.
    pub fn crop_frames(&self) -> usize {
        self.clip_samples / self.hop
    }

    /// Draws a uniform random item and a uniform hop-aligned crop for each
    /// batch entry. Waveform sample `i` of a crop starting at frame `j`
    /// lies under mel frame `j + i / hop`.
    pub fn next_batch<T: Real, R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch<T>> {
        let frames = self.crop_frames();
        let mut picks = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let i = rng.gen_range(0..self.items.len());
            let max_start = (self.items[i].clip.len() - self.clip_samples) / self.hop;
            picks.push((i, rng.gen_range(0..=max_start)));
        }
        self.batch_at(&picks, frames)
    }

    /// The batch for explicit `(item, first frame)` picks.
    pub fn batch_at<T: Real>(&self, picks: &[(usize, usize)], frames: usize) -> Result<Batch<T>> {
        let n_mels = self.items.first().map_or(0, |it| it.mel.n_mels);
        let samples = frames * self.hop;
        let mut mel = Vec::with_capacity(picks.len() * frames * n_mels);
        let mut wave = Vec::with_capacity(picks.len() * samples);
        for &(i, j) in picks {
            let it = self
                .items
                .get(i)
                .ok_or_else(|| VocoderError::Data(format!("no dataset item {i}")))?;
            let crop = it.mel.slice(j, j + frames)?;
            mel.extend(crop.values.data().iter().map(|&v| T::from_f64(v)));
            let start = j * self.hop;
            let audio = it.clip.samples.get(start..start + samples).ok_or_else(|| {
                VocoderError::Data(format!("crop at frame {j} runs past the end of {}", it.name))
            })?;
            wave.extend(audio.iter().map(|&s| T::from_f64(s as f64)));
        }
        Ok(Batch {
            mel: Tensor::new([picks.len(), frames, n_mels], mel)?,
            wave: Tensor::new([picks.len(), 1, samples], wave)?,
            picks: picks.to_vec(),
        })
    }
}

fn item(name: String, clip: AudioClip, digest: String, cfg: &TrainConfig, fb: &MelFilterbank) -> Result<AudioItem> {
    check_clip(&clip, &cfg.mel, cfg.clip_samples)?;
    let mel = mel_features_with(&clip, &cfg.mel, fb)?;
    Ok(AudioItem {
        name,
        clip,
        mel,
        digest,
    })
}

fn check_clip(clip: &AudioClip, mel: &MelConfig, clip_samples: usize) -> Result<()> {
    if clip.sample_rate != mel.sample_rate {
        return Err(VocoderError::Data(format!(
            "sample rate {} Hz, expected {}",
            clip.sample_rate, mel.sample_rate
        )));
    }
    if clip.len() < clip_samples {
        return Err(VocoderError::Data(format!(
            "{} samples, shorter than clip_samples {clip_samples}",
            clip.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoke::speech_like_clip;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset() -> Dataset {
        let cfg = TrainConfig::default();
        Dataset::from_clips(
            vec![
                ("a".into(), speech_like_clip(1, 9600)),
                ("short".into(), speech_like_clip(2, 1000)),
                ("b".into(), speech_like_clip(3, 7300)),
            ],
            &cfg,
        )
        .unwrap()
    }

    #[test]
    fn short_files_are_skipped() {
        let ds = dataset();
        let names: Vec<&str> = ds.items().iter().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        let err = Dataset::from_clips(vec![("s".into(), speech_like_clip(2, 100))], &TrainConfig::default());
        assert!(matches!(err, Err(VocoderError::NoUsableFiles(_))));
    }

    #[test]
    fn batch_shapes_and_alignment() {
        let ds = dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b: Batch<f32> = ds.next_batch(2, &mut rng).unwrap();
        assert_eq!(b.mel.shape(), &[2, 20, 80]);
        assert_eq!(b.wave.shape(), &[2, 1, 4800]);
        for (k, &(i, j)) in b.picks.iter().enumerate() {
            let it = &ds.items()[i];
            assert_eq!(b.wave.data()[k * 4800], it.clip.samples[j * 240]);
            assert_eq!(b.mel.data()[k * 1600] as f64 as f32, it.mel.values.data()[j * 80] as f32);
        }
    }

    #[test]
    fn seeded_crops_repeat() {
        let ds = dataset();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..20)
                .map(|_| ds.next_batch::<f32, _>(2, &mut rng).unwrap().picks)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }
}
