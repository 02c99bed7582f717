//! Mel-to-waveform generator.
//!
//! pre-conv → per stage [upsample block → dilated residual stack] →
//! leaky ReLU → output conv → tanh.

use autodiff::{Conv1dOptions, Graph, Real, Tensor, Var};

use crate::config::GeneratorConfig;
use crate::dsp::MelSpectrogram;
use crate::error::{Result, VocoderError};
use crate::nn::{self, in_layer};
use crate::params::{Bound, Initializer, ModelParams};

/// `x + sin(x)`.
pub fn sine_gate<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.sin(x)?;
    Ok(g.add(x, s)?)
}

/// Upsamples `[B, Cin, T]` to `[B, Cout, T * factor]`.
///
/// With `residual`, the sine-gated input feeds both a transposed conv and a
/// repeat + 1×1 conv branch whose outputs are summed. Without it, only the
/// transposed conv runs, on a leaky-ReLU input.
pub fn upsample_block<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    prefix: &str,
    x: Var,
    factor: usize,
    residual: bool,
) -> Result<Var> {
    let h = if residual {
        sine_gate(g, x)?
    } else {
        nn::leaky(g, x)?
    };
    let len = g.shape(x)[2];
    let layer = format!("{prefix}.convt");
    let a = nn::conv_transpose1d(g, p, &layer, h, factor)?;
    let full = g.shape(a)[2];
    let left = (full - len * factor) / 2;
    let a = g.slice(a, 2, left, left + len * factor).map_err(in_layer(&layer))?;
    if !residual {
        return Ok(a);
    }
    let layer = format!("{prefix}.repeat");
    let r = g.repeat_interleave(h, factor).map_err(in_layer(&layer))?;
    let b = nn::conv1d(g, p, &layer, r, Conv1dOptions::default())?;
    Ok(g.add(a, b)?)
}

/// Residual units `x ← x + conv1x1(lrelu(conv_dilated(lrelu(x))))`.
pub fn resstack<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var, dilations: &[usize]) -> Result<Var> {
    let mut x = x;
    for (j, &d) in dilations.iter().enumerate() {
        let h = nn::leaky(g, x)?;
        let h = nn::conv1d_same(g, p, &format!("{prefix}.{j}.dilated"), h, d)?;
        let h = nn::leaky(g, h)?;
        let h = nn::conv1d(g, p, &format!("{prefix}.{j}.pointwise"), h, Conv1dOptions::default())?;
        x = g.add(x, h)?;
    }
    Ok(x)
}

/// Receptive field in samples of a residual stack.
pub fn resstack_receptive_field(kernel: usize, dilations: &[usize]) -> usize {
    1 + dilations.iter().map(|d| d * (kernel - 1)).sum::<usize>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    cfg: GeneratorConfig,
    residual: bool,
    params: ModelParams<T>,
}

impl<T: Real> Generator<T> {
    pub fn new(cfg: &GeneratorConfig, residual_upsample: bool, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Initializer::new(seed);
        let mut params = ModelParams::new();
        let pre = cfg.pre_channels();
        init.conv1d(&mut params, "pre", cfg.n_mels, pre, cfg.pre_kernel, 1)?;
        let mut cin = pre;
        for (i, (&cout, &f)) in cfg.stage_channels().iter().zip(&cfg.up_factors).enumerate() {
            init.conv_transpose1d(&mut params, &format!("up{i}.convt"), cin, cout, 2 * f)?;
            if residual_upsample {
                init.conv1d(&mut params, &format!("up{i}.repeat"), cin, cout, 1, 1)?;
            }
            for j in 0..cfg.resstack_dilations.len() {
                init.conv1d(&mut params, &format!("res{i}.{j}.dilated"), cout, cout, cfg.resstack_kernel, 1)?;
                init.conv1d(&mut params, &format!("res{i}.{j}.pointwise"), cout, cout, 1, 1)?;
            }
            cin = cout;
        }
        init.conv1d(&mut params, "post", cin, 1, cfg.out_kernel, 1)?;
        Ok(Generator {
            cfg: cfg.clone(),
            residual: residual_upsample,
            params,
        })
    }

    /// Wraps existing parameters after checking names and shapes against the
    /// architecture.
    pub fn from_params(cfg: &GeneratorConfig, residual_upsample: bool, params: ModelParams<T>) -> Result<Self> {
        let template = Generator::<T>::new(cfg, residual_upsample, 0)?;
        check_layout("generator", &template.params, &params)?;
        Ok(Generator {
            cfg: cfg.clone(),
            residual: residual_upsample,
            params,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn residual_upsample(&self) -> bool {
        self.residual
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    /// `mel [B, frames, n_mels] -> waveform [B, 1, hop * frames]`.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, mel: Var) -> Result<Var> {
        let shape = g.shape(mel).to_vec();
        if shape.len() != 3 || shape[1] == 0 {
            return Err(VocoderError::layer("pre", format!("expected mel [B, frames >= 1, n_mels], got {shape:?}")));
        }
        if shape[2] != self.cfg.n_mels {
            return Err(VocoderError::layer(
                "pre",
                format!("expected {} mel channels, got {}", self.cfg.n_mels, shape[2]),
            ));
        }
        let x = g.permute(mel, &[0, 2, 1])?;
        let mut x = nn::conv1d_same(g, p, "pre", x, 1)?;
        for (i, &f) in self.cfg.up_factors.iter().enumerate() {
            x = upsample_block(g, p, &format!("up{i}"), x, f, self.residual)?;
            x = resstack(g, p, &format!("res{i}"), x, &self.cfg.resstack_dilations)?;
        }
        let x = nn::leaky(g, x)?;
        let x = nn::conv1d_same(g, p, "post", x, 1)?;
        Ok(g.tanh(x)?)
    }

    /// Waveform for one mel spectrogram, without gradient tracking.
    pub fn infer(&self, mel: &MelSpectrogram) -> Result<Vec<T>> {
        if mel.frames() == 0 {
            return Err(VocoderError::Data("mel spectrogram has no frames".into()));
        }
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let data = mel.values.data().iter().map(|&v| T::from_f64(v)).collect();
        let m = g.constant([1, mel.frames(), mel.n_mels], data)?;
        let y = self.forward(&mut g, &p, m)?;
        Ok(g.value(y).to_vec())
    }
}

/// Errors unless `actual` has exactly the names and shapes of `template`.
pub(crate) fn check_layout<T: Real>(model: &str, template: &ModelParams<T>, actual: &ModelParams<T>) -> Result<()> {
    for (name, t) in template.iter() {
        match actual.get(name) {
            None => return Err(VocoderError::layer(name, format!("{model} parameter missing"))),
            Some(a) if a.shape() != t.shape() => {
                return Err(VocoderError::layer(
                    name,
                    format!("{model} parameter has shape {:?}, expected {:?}", a.shape(), t.shape()),
                ))
            }
            _ => {}
        }
    }
    if let Some(extra) = actual.names().find(|n| template.get(n).is_none()) {
        return Err(VocoderError::layer(extra, format!("unexpected {model} parameter")));
    }
    Ok(())
}

/// Mel tensor `[B, frames, n_mels]` from a batch of spectrograms.
pub fn stack_mels<T: Real>(mels: &[&MelSpectrogram]) -> Result<Tensor<T>> {
    let first = mels.first().ok_or_else(|| VocoderError::Data("empty mel batch".into()))?;
    let (f, m) = (first.frames(), first.n_mels);
    let mut data = Vec::with_capacity(mels.len() * f * m);
    for mel in mels {
        if mel.frames() != f || mel.n_mels != m {
            return Err(VocoderError::Data("mel batch items differ in shape".into()));
        }
        data.extend(mel.values.data().iter().map(|&v| T::from_f64(v)));
    }
    Ok(Tensor::new([mels.len(), f, m], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DESK_CHANNEL_SCALE;

    fn desk() -> GeneratorConfig {
        GeneratorConfig {
            channel_scale: DESK_CHANNEL_SCALE,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn sine_gate_examples() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(&Tensor::new([2], vec![0.0, std::f64::consts::PI]).unwrap().with_requires_grad(true));
        let y = sine_gate(&mut g, x).unwrap();
        assert_eq!(g.value(y)[0], 0.0);
        assert!((g.value(y)[1] - std::f64::consts::PI).abs() < 1e-15);
        let s = g.slice(y, 0, 0, 1).unwrap();
        let l = g.sum(s).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap()[0], 2.0);
    }

    #[test]
    fn receptive_field_of_default_stack() {
        assert_eq!(resstack_receptive_field(3, &[1, 3, 9, 27]), 81);
    }

    #[test]
    fn output_length_and_range() {
        let gen = Generator::<f64>::new(&desk(), true, 1).unwrap();
        for frames in [1usize, 3] {
            let mel = MelSpectrogram::new(
                Tensor::full([frames, 80], 0.3),
                240,
            )
            .unwrap();
            let y = gen.infer(&mel).unwrap();
            assert_eq!(y.len(), 240 * frames);
            assert!(y.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn residual_flag_changes_layout() {
        let a = Generator::<f32>::new(&desk(), true, 0).unwrap();
        let b = Generator::<f32>::new(&desk(), false, 0).unwrap();
        assert!(a.params().get("up0.repeat.weight").is_some());
        assert!(b.params().get("up0.repeat.weight").is_none());
        assert!(Generator::from_params(&desk(), false, a.params().clone()).is_err());
        assert!(Generator::from_params(&desk(), true, a.params().clone()).is_ok());
    }

    #[test]
    fn wrong_mel_channels_name_the_layer() {
        let gen = Generator::<f64>::new(&desk(), true, 1).unwrap();
        let mel = MelSpectrogram::new(Tensor::zeros([2, 40]), 240).unwrap();
        let err = gen.infer(&mel).unwrap_err().to_string();
        assert!(err.starts_with("pre:"), "{err}");
    }
}
