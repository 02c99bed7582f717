//! Multi-scale waveform discriminator and STFT-domain discriminator.

use autodiff::{Conv1dOptions, Graph, PadMode, Real, Var};

use crate::config::{FreqDiscConfig, TimeDiscConfig};
use crate::dsp;
use crate::error::{Result, VocoderError};
use crate::generator::check_layout;
use crate::nn::{self, in_layer};
use crate::params::{Bound, Initializer, ModelParams};

/// Shortest waveform the time discriminator accepts.
pub const MIN_TIME_DISC_LEN: usize = 256;

/// Output of one discriminator block.
#[derive(Debug, Clone)]
pub struct DiscOutput {
    /// Logits `[B, 1, T']` (time) or `[B, 1]` (frequency).
    pub logits: Var,
    /// Intermediate activations, in layer order.
    pub features: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeDiscriminator<T> {
    cfg: TimeDiscConfig,
    params: ModelParams<T>,
}

impl<T: Real> TimeDiscriminator<T> {
    pub fn new(cfg: &TimeDiscConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Initializer::new(seed);
        let mut params = ModelParams::new();
        let ch = cfg.channels();
        for k in 0..cfg.n_scales {
            init.conv1d(&mut params, &format!("scale{k}.entry"), 1, ch[0], cfg.entry_kernel, 1)?;
            for i in 0..cfg.n_strided {
                init.conv1d(
                    &mut params,
                    &format!("scale{k}.down{i}"),
                    ch[i],
                    ch[i + 1],
                    cfg.strided_kernel,
                    cfg.groups,
                )?;
            }
            let last = ch[cfg.n_strided];
            init.conv1d(&mut params, &format!("scale{k}.post"), last, last, cfg.post_kernel, 1)?;
            init.conv1d(&mut params, &format!("scale{k}.logit"), last, 1, cfg.logit_kernel, 1)?;
        }
        Ok(TimeDiscriminator {
            cfg: cfg.clone(),
            params,
        })
    }

    pub fn from_params(cfg: &TimeDiscConfig, params: ModelParams<T>) -> Result<Self> {
        check_layout("time discriminator", TimeDiscriminator::<T>::new(cfg, 0)?.params(), &params)?;
        Ok(TimeDiscriminator {
            cfg: cfg.clone(),
            params,
        })
    }

    pub fn config(&self) -> &TimeDiscConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    /// One output per scale; scale `k + 1` sees the average-pooled input of
    /// scale `k`.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Vec<DiscOutput>> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != 1 {
            return Err(VocoderError::layer("scale0.entry", format!("expected waveform [B, 1, T], got {shape:?}")));
        }
        if shape[2] < MIN_TIME_DISC_LEN {
            return Err(VocoderError::Data(format!(
                "time discriminator needs at least {MIN_TIME_DISC_LEN} samples, got {}",
                shape[2]
            )));
        }
        let c = &self.cfg;
        let mut outputs = Vec::with_capacity(c.n_scales);
        let mut input = x;
        for k in 0..c.n_scales {
            if k > 0 {
                input = g.avg_pool1d(input, c.pool_kernel, c.pool_stride)?;
            }
            let mut features = Vec::with_capacity(c.n_strided + 2);
            let entry = format!("scale{k}.entry");
            let pad = c.entry_kernel / 2;
            let h = g.pad1d(input, pad, pad, PadMode::Reflect).map_err(in_layer(&entry))?;
            let mut h = nn::conv1d(g, p, &entry, h, Conv1dOptions::default())?;
            h = nn::leaky(g, h)?;
            features.push(h);
            for i in 0..c.n_strided {
                let opts = Conv1dOptions::default()
                    .stride(c.stride)
                    .padding(c.strided_kernel / 2)
                    .groups(c.groups);
                h = nn::conv1d(g, p, &format!("scale{k}.down{i}"), h, opts)?;
                h = nn::leaky(g, h)?;
                features.push(h);
            }
            let opts = Conv1dOptions::default().padding(c.post_kernel / 2);
            h = nn::conv1d(g, p, &format!("scale{k}.post"), h, opts)?;
            h = nn::leaky(g, h)?;
            features.push(h);
            let opts = Conv1dOptions::default().padding(c.logit_kernel / 2);
            let logits = nn::conv1d(g, p, &format!("scale{k}.logit"), h, opts)?;
            outputs.push(DiscOutput { logits, features });
        }
        Ok(outputs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqDiscriminator<T> {
    cfg: FreqDiscConfig,
    params: ModelParams<T>,
}

const BLOCK_KERNEL: usize = 3;

impl<T: Real> FreqDiscriminator<T> {
    pub fn new(cfg: &FreqDiscConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Initializer::new(seed);
        let mut params = ModelParams::new();
        let ch = cfg.stage_channels();
        init.conv2d(&mut params, "stem", 2, ch[0], cfg.stem_kernel)?;
        init.conv2d(&mut params, "stage0.conv0", ch[0], ch[0], BLOCK_KERNEL)?;
        init.conv2d(&mut params, "stage0.conv1", ch[0], ch[0], BLOCK_KERNEL)?;
        for s in 1..ch.len() {
            let (cin, cout) = (ch[s - 1], ch[s]);
            for b in 0..2 {
                let first_in = if b == 0 { cin } else { cout };
                init.conv2d(&mut params, &format!("stage{s}.block{b}.conv0"), first_in, cout, BLOCK_KERNEL)?;
                init.conv2d(&mut params, &format!("stage{s}.block{b}.conv1"), cout, cout, BLOCK_KERNEL)?;
            }
            init.conv2d(&mut params, &format!("stage{s}.block0.shortcut"), cin, cout, 1)?;
        }
        init.conv2d(&mut params, "head", ch[ch.len() - 1], 1, 1)?;
        Ok(FreqDiscriminator {
            cfg: cfg.clone(),
            params,
        })
    }

    pub fn from_params(cfg: &FreqDiscConfig, params: ModelParams<T>) -> Result<Self> {
        check_layout("frequency discriminator", FreqDiscriminator::<T>::new(cfg, 0)?.params(), &params)?;
        Ok(FreqDiscriminator {
            cfg: cfg.clone(),
            params,
        })
    }

    pub fn config(&self) -> &FreqDiscConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    /// Waveform `[B, 1, T]` to a logit per batch item, `[B, 1]`.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<DiscOutput> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != 1 {
            return Err(VocoderError::layer("stem", format!("expected waveform [B, 1, T], got {shape:?}")));
        }
        if shape[2] < self.cfg.stft.win_length {
            return Err(VocoderError::Data(format!(
                "frequency discriminator needs at least {} samples, got {}",
                self.cfg.stft.win_length, shape[2]
            )));
        }
        let flat = g.reshape(x, [shape[0], shape[2]])?;
        let spec = dsp::stft(g, flat, &self.cfg.stft)?;
        // [B, frames, 2, bins] -> [B, 2, frames, bins]
        let mut h = g.permute(spec, &[0, 2, 1, 3])?;
        let mut features = Vec::new();
        h = nn::conv2d(g, p, "stem", h, self.cfg.stem_stride, self.cfg.stem_kernel / 2)?;
        h = nn::leaky(g, h)?;
        features.push(h);
        let pad = BLOCK_KERNEL / 2;
        h = nn::conv2d(g, p, "stage0.conv0", h, 1, pad)?;
        h = nn::leaky(g, h)?;
        h = nn::conv2d(g, p, "stage0.conv1", h, 1, pad)?;
        h = nn::leaky(g, h)?;
        features.push(h);
        for s in 1..self.cfg.stage_channels.len() {
            for b in 0..2 {
                let stride = if b == 0 { 2 } else { 1 };
                let prefix = format!("stage{s}.block{b}");
                let y = nn::conv2d(g, p, &format!("{prefix}.conv0"), h, stride, pad)?;
                let y = nn::leaky(g, y)?;
                let y = nn::conv2d(g, p, &format!("{prefix}.conv1"), y, 1, pad)?;
                let shortcut = if b == 0 {
                    nn::conv2d(g, p, &format!("{prefix}.shortcut"), h, stride, 0)?
                } else {
                    h
                };
                let sum = g.add(y, shortcut)?;
                h = nn::leaky(g, sum)?;
            }
            features.push(h);
        }
        let head = nn::conv2d(g, p, "head", h, 1, 0)?;
        let logits = g.mean_axes(head, &[2, 3])?;
        Ok(DiscOutput { logits, features })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use autodiff::Tensor;

    fn desk_time() -> TimeDiscConfig {
        TimeDiscConfig {
            channel_scale: 0.125,
            ..TimeDiscConfig::default()
        }
    }

    fn desk_freq() -> FreqDiscConfig {
        FreqDiscConfig {
            channel_scale: 0.125,
            ..FreqDiscConfig::default()
        }
    }

    #[test]
    fn time_logits_shrink_per_scale() {
        let d = TimeDiscriminator::<f32>::new(&desk_time(), 0).unwrap();
        let mut g = Graph::new();
        let p = d.params().bind(&mut g, false);
        let x = g.constant([1, 1, 2400], vec![0.0; 2400]).unwrap();
        let out = d.forward(&mut g, &p, x).unwrap();
        assert_eq!(out.len(), 3);
        let lens: Vec<usize> = out.iter().map(|o| g.shape(o.logits)[2]).collect();
        assert!(lens.windows(2).all(|w| w[0] > w[1]), "{lens:?}");
        assert!(out.iter().all(|o| g.value(o.logits).iter().all(|v| v.is_finite())));
        assert!(out.iter().all(|o| o.features.len() == 5));
    }

    #[test]
    fn time_disc_rejects_short_input() {
        let d = TimeDiscriminator::<f32>::new(&desk_time(), 0).unwrap();
        let mut g = Graph::new();
        let p = d.params().bind(&mut g, false);
        let x = g.constant([1, 1, 255], vec![0.0; 255]).unwrap();
        let err = d.forward(&mut g, &p, x).unwrap_err().to_string();
        assert!(err.contains("256"), "{err}");
    }

    #[test]
    fn freq_logit_shape() {
        let d = FreqDiscriminator::<f32>::new(&desk_freq(), 0).unwrap();
        for t in [512usize, 1200] {
            let mut g = Graph::new();
            let p = d.params().bind(&mut g, false);
            let x = g.constant([2, 1, t], vec![0.1; 2 * t]).unwrap();
            let out = d.forward(&mut g, &p, x).unwrap();
            assert_eq!(g.shape(out.logits), &[2, 1]);
        }
    }

    #[test]
    fn freq_disc_zero_input_is_bias_path() {
        // zero waveform: the output depends only on biases, so scaling all
        // weights of the stem leaves it unchanged.
        let d = FreqDiscriminator::<f64>::new(&desk_freq(), 0).unwrap();
        let run = |d: &FreqDiscriminator<f64>| {
            let mut g = Graph::new();
            let p = d.params().bind(&mut g, false);
            let x = g.constant([1, 1, 600], vec![0.0; 600]).unwrap();
            let out = d.forward(&mut g, &p, x).unwrap();
            g.value(out.logits)[0]
        };
        let base = run(&d);
        let mut scaled = d.clone();
        let w = scaled.params_mut().get_mut("stem.weight").unwrap();
        let doubled: Vec<f64> = w.data().iter().map(|v| v * 2.0).collect();
        *w = Tensor::new(w.shape().to_vec(), doubled).unwrap().with_requires_grad(true);
        assert_eq!(run(&scaled), base);
    }
}
