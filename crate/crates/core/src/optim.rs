//! Adam with bias correction.

use autodiff::{Real, Tensor};
use indexmap::IndexMap;

use crate::config::LrDecay;
use crate::error::{Result, VocoderError};
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients so their global L2 norm is at most this.
    pub grad_clip_norm: Option<f64>,
    pub lr_decay: Option<LrDecay>,
}

impl AdamConfig {
    pub fn new(lr: f64, betas: (f64, f64), eps: f64) -> Self {
        AdamConfig {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            grad_clip_norm: None,
            lr_decay: None,
        }
    }

    /// Learning rate used for update number `t` (1-based).
    pub fn lr_at(&self, t: u64) -> f64 {
        match self.lr_decay {
            Some(d) if d.every_steps > 0 => self.lr * d.gamma.powi(((t - 1) / d.every_steps) as i32),
            _ => self.lr,
        }
    }
}

/// Moment buffers and update count.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: IndexMap<String, Tensor<T>>,
    pub v: IndexMap<String, Tensor<T>>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ModelParams<T>) -> Self {
        let zeros = || -> IndexMap<String, Tensor<T>> {
            params
                .iter()
                .map(|(n, p)| (n.to_string(), Tensor::zeros(p.shape().to_vec())))
                .collect()
        };
        Adam {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Applies one update from the accumulated gradients, then clears them so
    /// a later step without a fresh backward pass fails instead of reusing
    /// stale values.
    pub fn step(&mut self, params: &mut ModelParams<T>) -> Result<()> {
        for (name, p) in params.iter() {
            if p.grad().is_none() {
                return Err(VocoderError::MissingGrad(name.to_string()));
            }
            let m = self
                .m
                .get(name)
                .ok_or_else(|| VocoderError::layer(name, "no optimizer state for parameter"))?;
            if m.shape() != p.shape() {
                return Err(VocoderError::layer(name, "optimizer state shape differs from parameter"));
            }
        }
        let clip_scale = match self.config.grad_clip_norm {
            Some(max) => {
                let sq: f64 = params
                    .iter()
                    .flat_map(|(_, p)| p.grad().expect("checked").iter().map(|g| g.as_f64().powi(2)))
                    .sum();
                let norm = sq.sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let c = &self.config;
        let lr = c.lr_at(self.t);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let bc1 = T::from_f64(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps, clip) = (T::from_f64(lr), T::from_f64(c.eps), T::from_f64(clip_scale));
        for (name, p) in params.iter_mut() {
            let grad: Vec<T> = p.grad().expect("checked").iter().map(|&g| g * clip).collect();
            let m = self.m.get_mut(name).expect("checked").data_mut();
            let v = self.v.get_mut(name).expect("checked").data_mut();
            let data = p.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.clear_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ModelParams<f64> {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::new([1], vec![value]).unwrap()).unwrap();
        p
    }

    #[test]
    fn first_step_is_signed_lr() {
        let mut p = single(1.0);
        let mut adam = Adam::new(AdamConfig::new(2e-4, (0.5, 0.9), 1e-8), &p);
        p.get_mut("w").unwrap().accumulate_grad(&[3.0]).unwrap();
        adam.step(&mut p).unwrap();
        let expect = 1.0 - 2e-4 * 3.0 / (3.0 + 1e-8);
        assert!((p.get("w").unwrap().data()[0] - expect).abs() < 1e-15);
        assert!(p.get("w").unwrap().grad().is_none());
    }

    #[test]
    fn zero_grad_leaves_param_and_counts_step() {
        let mut p = single(0.5);
        let mut adam = Adam::new(AdamConfig::new(1e-3, (0.5, 0.9), 1e-8), &p);
        p.get_mut("w").unwrap().accumulate_grad(&[0.0]).unwrap();
        adam.step(&mut p).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 0.5);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut p = single(0.5);
        let mut adam = Adam::new(AdamConfig::new(1e-3, (0.5, 0.9), 1e-8), &p);
        let err = adam.step(&mut p).unwrap_err().to_string();
        assert!(err.contains('w'), "{err}");
    }

    #[test]
    fn matches_scalar_reference_over_two_steps() {
        let (lr, b1, b2, eps) = (1e-2, 0.5, 0.9, 1e-8);
        let mut p = single(0.3);
        let mut adam = Adam::new(AdamConfig::new(lr, (b1, b2), eps), &p);
        let (mut x, mut m, mut v) = (0.3f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 0.7;
            p.get_mut("w").unwrap().accumulate_grad(&[g]).unwrap();
            adam.step(&mut p).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            assert_eq!(p.get("w").unwrap().data()[0], x);
        }
    }

    #[test]
    fn clipping_and_decay() {
        let mut cfg = AdamConfig::new(1.0, (0.0, 0.0), 1e-8);
        cfg.lr_decay = Some(LrDecay {
            every_steps: 2,
            gamma: 0.5,
        });
        assert_eq!(cfg.lr_at(1), 1.0);
        assert_eq!(cfg.lr_at(2), 1.0);
        assert_eq!(cfg.lr_at(3), 0.5);
        cfg.grad_clip_norm = Some(1.0);
        let mut p = single(0.0);
        let mut adam = Adam::new(cfg, &p);
        p.get_mut("w").unwrap().accumulate_grad(&[10.0]).unwrap();
        adam.step(&mut p).unwrap();
        // beta 0: update = lr * g / |g| regardless of scale
        assert!((p.get("w").unwrap().data()[0] + 1.0).abs() < 1e-6);
    }
}
