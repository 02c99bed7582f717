//! Log-mel feature caches stored in the named-array container.

use std::path::Path;

use crate::config::MelConfig;
use crate::container::Container;
use crate::dsp::{mel_features, read_wav, MelSpectrogram};
use crate::error::{Result, VocoderError};

pub const MEL_ARRAY: &str = "mel";
const MEL_CONFIG_ARRAY: &str = "mel_config";

pub fn cache_container(mel: &MelSpectrogram, cfg: &MelConfig) -> Result<Container> {
    let mut c = Container::new();
    c.insert_tensor(MEL_ARRAY, &mel.values)?;
    c.insert_bytes(MEL_CONFIG_ARRAY, &serde_json::to_vec(cfg)?)?;
    Ok(c)
}

pub fn write_mel_cache(path: impl AsRef<Path>, mel: &MelSpectrogram, cfg: &MelConfig) -> Result<()> {
    cache_container(mel, cfg)?.save(path)
}

pub fn read_mel_cache(path: impl AsRef<Path>) -> Result<(MelSpectrogram, MelConfig)> {
    let c = Container::load(path)?;
    let cfg: MelConfig = serde_json::from_slice(c.bytes(MEL_CONFIG_ARRAY)?)?;
    let values = c.tensor::<f64>(MEL_ARRAY)?;
    if values.shape().len() != 2 || values.shape()[1] != cfg.n_mels {
        return Err(VocoderError::Format(format!(
            "mel array has shape {:?}, expected [frames, {}]",
            values.shape(),
            cfg.n_mels
        )));
    }
    Ok((MelSpectrogram::new(values, cfg.hop_length)?, cfg))
}

/// True when the file starts with the container magic.
pub fn is_container(path: impl AsRef<Path>) -> Result<bool> {
    use std::io::Read;
    let path = path.as_ref();
    let mut f = std::fs::File::open(path).map_err(|e| VocoderError::io(path, e))?;
    let mut head = [0u8; 4];
    match f.read_exact(&mut head) {
        Ok(()) => Ok(&head == crate::container::MAGIC),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(VocoderError::io(path, e)),
    }
}

/// Mel features from either a cache file or a WAV (extracted with `cfg`).
pub fn load_features(path: impl AsRef<Path>, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let path = path.as_ref();
    if is_container(path)? {
        let (mel, stored) = read_mel_cache(path)?;
        if stored != *cfg {
            return Err(VocoderError::Config(format!(
                "{}: cached features were extracted with a different mel configuration",
                path.display()
            )));
        }
        Ok(mel)
    } else {
        mel_features(&read_wav(path)?, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::AudioClip;
    use crate::smoke::speech_like_clip;

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MelConfig::default();
        let mel = mel_features(&speech_like_clip(1, 2400), &cfg).unwrap();
        let path = dir.path().join("a.tfv");
        write_mel_cache(&path, &mel, &cfg).unwrap();
        assert!(is_container(&path).unwrap());
        let back = load_features(&path, &cfg).unwrap();
        assert_eq!(back.values, mel.values);
    }

    #[test]
    fn wav_input_is_extracted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        crate::dsp::write_wav(&path, &AudioClip::new(vec![0.0; 24000], 24000)).unwrap();
        assert!(!is_container(&path).unwrap());
        let mel = load_features(&path, &MelConfig::default()).unwrap();
        assert_eq!(mel.frames(), 101);
    }
}
