//! Hyperparameters for models, losses and training.
//!
//! Every struct deserializes with defaults for missing fields, so a JSON
//! config only needs to name what it overrides.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VocoderError};

/// Applies a channel multiplier, never going below `multiple` and always
/// landing on a multiple of it.
pub(crate) fn scale_channels(base: usize, scale: f64, multiple: usize) -> usize {
    let c = ((base as f64 * scale).round() as usize).max(1);
    c.div_ceil(multiple) * multiple
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Training precision.
    #[default]
    F32,
    /// Verification precision.
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub window: Window,
    /// Reflect-pad by `fft_size / 2` on both ends before framing.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig::new(512, 240, 512)
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop_length: usize, win_length: usize) -> Self {
        StftConfig {
            fft_size,
            hop_length,
            win_length,
            window: Window::Hann,
            center: false,
        }
    }

    pub fn centered(mut self, center: bool) -> Self {
        self.center = center;
        self
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(VocoderError::Config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.hop_length == 0 || self.win_length == 0 || self.win_length > self.fft_size {
            return Err(VocoderError::Config(format!(
                "stft needs hop >= 1 and 1 <= win <= fft, got ({}, {}, {})",
                self.fft_size, self.hop_length, self.win_length
            )));
        }
        Ok(())
    }

    /// Frames produced for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> Option<usize> {
        let padded = if self.center { len + self.fft_size } else { len };
        (padded >= self.win_length).then(|| (padded - self.win_length) / self.hop_length + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub center: bool,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: 24_000,
            fft_size: 1024,
            hop_length: 240,
            win_length: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: 12_000.0,
            center: true,
        }
    }
}

impl MelConfig {
    pub fn stft(&self) -> StftConfig {
        StftConfig::new(self.fft_size, self.hop_length, self.win_length).centered(self.center)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft().validate()?;
        if self.n_mels == 0 || !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return Err(VocoderError::Config("mel needs n_mels >= 1 and 0 <= fmin < fmax".into()));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 {
            return Err(VocoderError::Config("mel fmax exceeds the Nyquist frequency".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_mels: usize,
    pub pre_conv_channels: usize,
    pub stage_channels: Vec<usize>,
    pub up_factors: Vec<usize>,
    pub resstack_dilations: Vec<usize>,
    pub resstack_kernel: usize,
    pub pre_kernel: usize,
    pub out_kernel: usize,
    pub channel_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_mels: 80,
            pre_conv_channels: 512,
            stage_channels: vec![256, 128, 64],
            up_factors: vec![8, 6, 5],
            resstack_dilations: vec![1, 3, 9, 27],
            resstack_kernel: 3,
            pre_kernel: 7,
            out_kernel: 7,
            channel_scale: 1.0,
        }
    }
}

impl GeneratorConfig {
    /// Samples produced per mel frame.
    pub fn hop_length(&self) -> usize {
        self.up_factors.iter().product()
    }

    pub fn pre_channels(&self) -> usize {
        scale_channels(self.pre_conv_channels, self.channel_scale, 1)
    }

    pub fn stage_channels(&self) -> Vec<usize> {
        self.stage_channels
            .iter()
            .map(|&c| scale_channels(c, self.channel_scale, 1))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.len() != self.up_factors.len() {
            return Err(VocoderError::Config(
                "stage_channels and up_factors must have the same length".into(),
            ));
        }
        if self.up_factors.iter().any(|&f| f == 0) || self.up_factors.is_empty() {
            return Err(VocoderError::Config("up_factors must be non-empty and >= 1".into()));
        }
        for (name, k) in [
            ("resstack_kernel", self.resstack_kernel),
            ("pre_kernel", self.pre_kernel),
            ("out_kernel", self.out_kernel),
        ] {
            if k % 2 == 0 {
                return Err(VocoderError::Config(format!("{name} must be odd, got {k}")));
            }
        }
        if !(self.channel_scale > 0.0) {
            return Err(VocoderError::Config("channel_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeDiscConfig {
    pub n_scales: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub n_strided: usize,
    pub entry_kernel: usize,
    pub strided_kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub post_kernel: usize,
    pub logit_kernel: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub channel_scale: f64,
}

impl Default for TimeDiscConfig {
    fn default() -> Self {
        TimeDiscConfig {
            n_scales: 3,
            base_channels: 16,
            max_channels: 512,
            n_strided: 3,
            entry_kernel: 15,
            strided_kernel: 41,
            stride: 4,
            groups: 4,
            post_kernel: 5,
            logit_kernel: 3,
            pool_kernel: 4,
            pool_stride: 2,
            channel_scale: 1.0,
        }
    }
}

impl TimeDiscConfig {
    /// Channel widths: entry conv, then each strided conv.
    pub fn channels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_strided + 1);
        let mut c = self.base_channels;
        for _ in 0..=self.n_strided {
            out.push(scale_channels(c.min(self.max_channels), self.channel_scale, self.groups));
            c *= 4;
        }
        out
    }

    /// Input lengths seen by each scale for a waveform of `len` samples.
    pub fn scale_lengths(&self, len: usize) -> Vec<usize> {
        let mut out = vec![len];
        for _ in 1..self.n_scales {
            let prev = *out.last().expect("non-empty");
            out.push(if prev >= self.pool_kernel {
                (prev - self.pool_kernel) / self.pool_stride + 1
            } else {
                0
            });
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scales == 0 || self.groups == 0 || self.stride == 0 || self.pool_stride == 0 {
            return Err(VocoderError::Config("time discriminator sizes must be >= 1".into()));
        }
        for k in [self.entry_kernel, self.strided_kernel, self.post_kernel, self.logit_kernel] {
            if k % 2 == 0 {
                return Err(VocoderError::Config(format!("time discriminator kernel {k} must be odd")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreqDiscConfig {
    pub stft: StftConfig,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stage_channels: Vec<usize>,
    pub channel_scale: f64,
}

impl Default for FreqDiscConfig {
    fn default() -> Self {
        FreqDiscConfig {
            stft: StftConfig::new(512, 240, 512),
            stem_kernel: 7,
            stem_stride: 2,
            stage_channels: vec![64, 128, 256, 512],
            channel_scale: 1.0,
        }
    }
}

impl FreqDiscConfig {
    pub fn stage_channels(&self) -> Vec<usize> {
        self.stage_channels
            .iter()
            .map(|&c| scale_channels(c, self.channel_scale, 1))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.stage_channels.is_empty() || self.stem_kernel % 2 == 0 || self.stem_stride == 0 {
            return Err(VocoderError::Config(
                "frequency discriminator needs >= 1 stage, an odd stem kernel and stride >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftLossConfig {
    /// `(fft_size, hop_length, win_length)` per resolution.
    pub resolutions: Vec<(usize, usize, usize)>,
}

impl Default for StftLossConfig {
    fn default() -> Self {
        StftLossConfig {
            resolutions: vec![(1024, 120, 600), (2048, 240, 1200), (512, 50, 240)],
        }
    }
}

impl StftLossConfig {
    pub fn stft_configs(&self) -> Vec<StftConfig> {
        self.resolutions
            .iter()
            .map(|&(f, h, w)| StftConfig::new(f, h, w))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(VocoderError::Config("stft loss needs at least one resolution".into()));
        }
        self.stft_configs().iter().try_for_each(StftConfig::validate)
    }

    pub fn min_length(&self) -> usize {
        self.resolutions.iter().map(|r| r.2).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeLossConfig {
    /// `(frame_length, hop_length)` per scale.
    pub scales: Vec<(usize, usize)>,
}

impl Default for TimeLossConfig {
    fn default() -> Self {
        TimeLossConfig {
            scales: vec![(1, 1), (240, 120), (480, 240), (960, 480)],
        }
    }
}

impl TimeLossConfig {
    pub fn min_length(&self) -> usize {
        self.scales.iter().map(|s| s.0).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|&(f, h)| h == 0 || h > f) {
            return Err(VocoderError::Config("time loss scales need 1 <= hop <= frame".into()));
        }
        Ok(())
    }
}

/// Weights of the generator objective terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Time-discriminator adversarial term.
    pub lambda1: f64,
    /// Multi-resolution STFT term.
    pub lambda2: f64,
    /// Frequency-discriminator adversarial term.
    pub lambda3: f64,
    /// Time-domain loss term.
    pub lambda4: f64,
    /// Discriminator feature matching; `0` disables it.
    pub feature_matching: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 20.0,
            feature_matching: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.feature_matching];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(VocoderError::Config("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub use_stft_loss: bool,
    pub use_residual_upsample: bool,
    pub use_freq_disc: bool,
    pub use_time_losses: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Ablation::P4.flags()
    }
}

/// Named ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    /// Plain transposed-conv upsampling, time discriminator only.
    B0,
    /// B0 plus the multi-resolution STFT loss.
    P1,
    /// P1 plus the sine/repeat upsample block.
    P2,
    /// P2 plus the time-domain losses, no frequency discriminator.
    P3,
    /// Everything.
    P4,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::B0, Ablation::P1, Ablation::P2, Ablation::P3, Ablation::P4];

    pub fn flags(self) -> AblationFlags {
        let (stft, residual, freq, time) = match self {
            Ablation::B0 => (false, false, false, false),
            Ablation::P1 => (true, false, false, false),
            Ablation::P2 => (true, true, false, false),
            Ablation::P3 => (true, true, false, true),
            Ablation::P4 => (true, true, true, true),
        };
        AblationFlags {
            use_stft_loss: stft,
            use_residual_upsample: residual,
            use_freq_disc: freq,
            use_time_losses: time,
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = VocoderError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B0" | "B0-LIKE" => Ok(Ablation::B0),
            "P1" => Ok(Ablation::P1),
            "P2" => Ok(Ablation::P2),
            "P3" => Ok(Ablation::P3),
            "P4" => Ok(Ablation::P4),
            other => Err(VocoderError::Config(format!(
                "unknown ablation {other:?}; expected one of B0, P1, P2, P3, P4"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub every_steps: u64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub precision: Precision,
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub clip_samples: usize,
    pub lr: f64,
    /// Discriminator learning rate; `None` uses `lr`.
    pub d_lr: Option<f64>,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Generator-only steps before adversarial terms and discriminator
    /// updates switch on.
    pub g_warmup_steps: u64,
    pub grad_clip_norm: Option<f64>,
    pub lr_decay: Option<LrDecay>,
    pub checkpoint_every: u64,
    pub weights: LossWeights,
    pub ablation: AblationFlags,
    pub stft_loss: StftLossConfig,
    pub time_loss: TimeLossConfig,
    pub mel: MelConfig,
    pub generator: GeneratorConfig,
    pub time_disc: TimeDiscConfig,
    pub freq_disc: FreqDiscConfig,
}

/// Channel multiplier of the desk-scale defaults.
pub const DESK_CHANNEL_SCALE: f64 = 0.125;

impl Default for TrainConfig {
    /// Desk-scale defaults: 1/8 channels, 0.2 s clips, batch of 2.
    fn default() -> Self {
        let mut cfg = TrainConfig::full_scale();
        cfg.set_channel_scale(DESK_CHANNEL_SCALE);
        cfg.batch_size = 2;
        cfg.clip_samples = 4800;
        cfg
    }
}

impl TrainConfig {
    /// Full-size models, 24000-sample clips, batch of 16.
    pub fn full_scale() -> Self {
        TrainConfig {
            precision: Precision::F32,
            seed: 0,
            steps: 1000,
            batch_size: 16,
            clip_samples: 24_000,
            lr: 2e-4,
            d_lr: None,
            adam_betas: (0.5, 0.9),
            adam_eps: 1e-8,
            g_warmup_steps: 0,
            grad_clip_norm: None,
            lr_decay: None,
            checkpoint_every: 100,
            weights: LossWeights::default(),
            ablation: AblationFlags::default(),
            stft_loss: StftLossConfig::default(),
            time_loss: TimeLossConfig::default(),
            mel: MelConfig::default(),
            generator: GeneratorConfig::default(),
            time_disc: TimeDiscConfig::default(),
            freq_disc: FreqDiscConfig::default(),
        }
    }

    pub fn set_channel_scale(&mut self, scale: f64) {
        self.generator.channel_scale = scale;
        self.time_disc.channel_scale = scale;
        self.freq_disc.channel_scale = scale;
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation.flags();
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn d_lr(&self) -> f64 {
        self.d_lr.unwrap_or(self.lr)
    }

    pub fn validate(&self) -> Result<()> {
        let hop = self.generator.hop_length();
        if self.clip_samples == 0 || self.clip_samples % hop != 0 {
            return Err(VocoderError::Config(format!(
                "clip_samples {} must be multiple of {hop}",
                self.clip_samples
            )));
        }
        if !(self.lr > 0.0) || self.d_lr.is_some_and(|v| !(v >= 0.0)) {
            return Err(VocoderError::Config("lr must be > 0 (d_lr >= 0)".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || !(self.adam_eps > 0.0) {
            return Err(VocoderError::Config("adam betas must lie in [0, 1) and eps > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(VocoderError::Config("batch_size must be >= 1".into()));
        }
        if self.mel.hop_length != hop {
            return Err(VocoderError::Config(format!(
                "mel hop {} must equal the generator upsampling product {hop}",
                self.mel.hop_length
            )));
        }
        if self.mel.n_mels != self.generator.n_mels {
            return Err(VocoderError::Config("mel n_mels differs from generator n_mels".into()));
        }
        let need = self.time_loss.min_length().max(self.stft_loss.min_length()).max(256);
        if self.clip_samples < need {
            return Err(VocoderError::Config(format!(
                "clip_samples {} shorter than the {need} samples the losses need",
                self.clip_samples
            )));
        }
        self.weights.validate()?;
        self.stft_loss.validate()?;
        self.time_loss.validate()?;
        self.mel.validate()?;
        self.generator.validate()?;
        self.time_disc.validate()?;
        self.freq_disc.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_values() {
        let cfg = TrainConfig::full_scale();
        assert_eq!(cfg.generator.up_factors, vec![8, 6, 5]);
        assert_eq!(cfg.generator.hop_length(), 240);
        assert_eq!(cfg.generator.pre_conv_channels, 512);
        assert_eq!(cfg.generator.stage_channels, vec![256, 128, 64]);
        assert_eq!(cfg.generator.resstack_dilations, vec![1, 3, 9, 27]);
        assert_eq!(cfg.lr, 2e-4);
        assert_eq!(cfg.clip_samples, 24_000);
        let w = &cfg.weights;
        assert_eq!((w.lambda1, w.lambda2, w.lambda3, w.lambda4), (1.0, 1.0, 1.0, 20.0));
        assert_eq!(cfg.freq_disc.stft, StftConfig::new(512, 240, 512));
        assert_eq!(cfg.time_loss.scales, vec![(1, 1), (240, 120), (480, 240), (960, 480)]);
        cfg.validate().unwrap();
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn clip_samples_must_be_multiple_of_hop() {
        let cfg = TrainConfig {
            clip_samples: 1000,
            ..TrainConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("must be multiple of 240"), "{err}");
    }

    #[test]
    fn mel_hop_must_match_generator() {
        let mut cfg = TrainConfig::default();
        cfg.mel.hop_length = 256;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ablation_flags() {
        let p3 = Ablation::P3.flags();
        assert!(!p3.use_freq_disc && p3.use_stft_loss && p3.use_residual_upsample && p3.use_time_losses);
        assert_eq!("p4".parse::<Ablation>().unwrap(), Ablation::P4);
        assert!("P9".parse::<Ablation>().is_err());
    }

    #[test]
    fn json_round_trip_and_partial_override() {
        let cfg = TrainConfig::default();
        assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = TrainConfig::from_json(r#"{"steps": 7, "weights": {"lambda4": 5.0}}"#).unwrap();
        assert_eq!(partial.steps, 7);
        assert_eq!(partial.weights.lambda4, 5.0);
        assert_eq!(partial.weights.lambda1, 1.0);
        assert!(TrainConfig::from_json(r#"{"stepz": 7}"#).is_err());
    }

    #[test]
    fn time_disc_channels_respect_groups() {
        let mut cfg = TimeDiscConfig::default();
        assert_eq!(cfg.channels(), vec![16, 64, 256, 512]);
        cfg.channel_scale = 0.125;
        assert_eq!(cfg.channels(), vec![4, 8, 32, 64]);
    }
}
