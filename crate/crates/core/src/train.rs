//! Alternating discriminator/generator training.

use std::fs::File;
use std::path::Path;
use std::time::Instant;

use autodiff::{Graph, Real};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::data::{Batch, Dataset};
use crate::discriminators::{FreqDiscriminator, TimeDiscriminator};
use crate::error::{Result, VocoderError};
use crate::generator::Generator;
use crate::losses::{
    component, discriminator_total_loss, generator_total_loss, multi_res_stft_loss, GeneratorLossConfig,
};
use crate::optim::{Adam, AdamConfig};

/// Losses and timing of one training step. Components are unweighted.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 1-based index of the completed step.
    pub step: u64,
    pub wall_ms: f64,
    /// Weighted generator objective.
    pub total: f64,
    pub components: IndexMap<&'static str, f64>,
}

impl StepReport {
    /// Weighted sum of the generator components under `cfg`'s weights.
    pub fn weighted_generator_sum(&self, cfg: &TrainConfig) -> f64 {
        let w = &cfg.weights;
        self.components
            .iter()
            .map(|(&name, &v)| {
                v * match name {
                    component::ADV_TIME => w.lambda1,
                    component::STFT => w.lambda2,
                    component::ADV_FREQ => w.lambda3,
                    component::TIME => w.lambda4,
                    component::FEATURE_MATCHING => w.feature_matching,
                    _ => 0.0,
                }
            })
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.total.is_finite() && self.components.values().all(|v| v.is_finite())
    }

    fn describe(total: f64, components: &IndexMap<&'static str, f64>) -> String {
        let mut s = format!("total={total}");
        for (k, v) in components {
            s.push_str(&format!(", {k}={v}"));
        }
        s
    }
}

/// Derives independent seeds for the models and the data stream.
fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Models, optimizers and the data RNG of one training run.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub cfg: TrainConfig,
    pub generator: Generator<T>,
    pub time_disc: TimeDiscriminator<T>,
    /// Present only when the frequency discriminator is enabled.
    pub freq_disc: Option<FreqDiscriminator<T>>,
    pub opt_g: Adam<T>,
    pub opt_time: Adam<T>,
    pub opt_freq: Option<Adam<T>>,
    /// Completed steps.
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl<T: Real> Trainer<T> {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let generator = Generator::new(&cfg.generator, cfg.ablation.use_residual_upsample, sub_seed(cfg.seed, 1))?;
        let time_disc = TimeDiscriminator::new(&cfg.time_disc, sub_seed(cfg.seed, 2))?;
        let freq_disc = if cfg.ablation.use_freq_disc {
            Some(FreqDiscriminator::new(&cfg.freq_disc, sub_seed(cfg.seed, 3))?)
        } else {
            None
        };
        let rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 4));
        Ok(Self::assemble(cfg, generator, time_disc, freq_disc, rng))
    }

    pub(crate) fn assemble(
        cfg: &TrainConfig,
        generator: Generator<T>,
        time_disc: TimeDiscriminator<T>,
        freq_disc: Option<FreqDiscriminator<T>>,
        rng: ChaCha8Rng,
    ) -> Self {
        let (g_cfg, d_cfg) = optimizer_configs(cfg);
        Trainer {
            opt_g: Adam::new(g_cfg, generator.params()),
            opt_time: Adam::new(d_cfg.clone(), time_disc.params()),
            opt_freq: freq_disc.as_ref().map(|d| Adam::new(d_cfg, d.params())),
            cfg: cfg.clone(),
            generator,
            time_disc,
            freq_disc,
            step: 0,
            rng,
        }
    }

    pub fn loss_config(&self) -> GeneratorLossConfig {
        GeneratorLossConfig {
            weights: self.cfg.weights.clone(),
            stft: self.cfg.ablation.use_stft_loss.then(|| self.cfg.stft_loss.clone()),
            time: self.cfg.ablation.use_time_losses.then(|| self.cfg.time_loss.clone()),
        }
    }

    /// Whether the adversarial terms and discriminator updates are on for
    /// the next step.
    pub fn adversarial(&self) -> bool {
        self.step >= self.cfg.g_warmup_steps
    }

    /// Draws a batch from `data` and trains on it.
    pub fn step_on(&mut self, data: &Dataset) -> Result<StepReport> {
        let batch = data.next_batch(self.cfg.batch_size, &mut self.rng)?;
        self.train_step(&batch)
    }

    /// One discriminator update on the detached generator output, then one
    /// generator update against the freshly updated discriminators.
    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<StepReport> {
        let start = Instant::now();
        let adversarial = self.adversarial();
        let mut g = Graph::new();
        let gp = self.generator.params().bind(&mut g, true);
        let mel = g.leaf(&batch.mel);
        let x = g.leaf(&batch.wave);
        let x_hat = self.generator.forward(&mut g, &gp, mel)?;
        if g.shape(x_hat) != g.shape(x) {
            return Err(VocoderError::Data(format!(
                "generator output {:?} does not match waveform batch {:?}",
                g.shape(x_hat),
                g.shape(x)
            )));
        }
        let mut components = IndexMap::new();

        let mut d_diag = None;
        if adversarial {
            let tp = self.time_disc.params().bind(&mut g, true);
            let fp = self.freq_disc.as_ref().map(|d| d.params().bind(&mut g, true));
            let d_obj = discriminator_total_loss(
                &mut g,
                x,
                x_hat,
                (&self.time_disc, &tp),
                self.freq_disc.as_ref().zip(fp.as_ref()),
            )?;
            let d_total = d_obj.total_value(&g);
            for (name, v) in d_obj.component_values(&g) {
                components.insert(name, v);
            }
            if !d_total.is_finite() || components.values().any(|v: &f64| !v.is_finite()) {
                return Err(VocoderError::NonFinite {
                    step: self.step + 1,
                    components: StepReport::describe(d_total, &components),
                });
            }
            g.backward(d_obj.total)?;
            self.time_disc.params_mut().absorb_grads(&g, &tp)?;
            self.opt_time.step(self.time_disc.params_mut())?;
            if let (Some(d), Some(opt), Some(p)) = (self.freq_disc.as_mut(), self.opt_freq.as_mut(), fp.as_ref()) {
                d.params_mut().absorb_grads(&g, p)?;
                opt.step(d.params_mut())?;
            }
            d_diag = Some(d_total);
        }

        let tp = adversarial.then(|| self.time_disc.params().bind(&mut g, false));
        let fp = match (&self.freq_disc, adversarial) {
            (Some(d), true) => Some(d.params().bind(&mut g, false)),
            _ => None,
        };
        let obj = generator_total_loss(
            &mut g,
            x,
            x_hat,
            tp.as_ref().map(|p| (&self.time_disc, p)),
            self.freq_disc.as_ref().zip(fp.as_ref()),
            &self.loss_config(),
        )?;
        let total = obj.total_value(&g);
        let mut g_components = IndexMap::new();
        for (name, v) in obj.component_values(&g) {
            g_components.insert(name, v);
        }
        g_components.extend(components);
        let components = g_components;
        if !total.is_finite() || components.values().any(|v| !v.is_finite()) {
            let mut s = StepReport::describe(total, &components);
            if let Some(d) = d_diag {
                s.push_str(&format!(", d_total={d}"));
            }
            return Err(VocoderError::NonFinite {
                step: self.step + 1,
                components: s,
            });
        }
        g.backward(obj.total)?;
        self.generator.params_mut().absorb_grads(&g, &gp)?;
        self.opt_g.step(self.generator.params_mut())?;
        self.step += 1;
        Ok(StepReport {
            step: self.step,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            total,
            components,
        })
    }

    /// Multi-resolution STFT loss between a batch and its resynthesis.
    pub fn eval_stft_loss(&self, batch: &Batch<T>) -> Result<f64> {
        let mut g = Graph::new();
        let gp = self.generator.params().bind(&mut g, false);
        let mel = g.leaf(&batch.mel);
        let x = g.leaf(&batch.wave);
        let x_hat = self.generator.forward(&mut g, &gp, mel)?;
        let l = multi_res_stft_loss(&mut g, x, x_hat, &self.cfg.stft_loss)?;
        Ok(g.value(l)[0].as_f64())
    }
}

pub(crate) fn optimizer_configs(cfg: &TrainConfig) -> (AdamConfig, AdamConfig) {
    let mut g = AdamConfig::new(cfg.lr, cfg.adam_betas, cfg.adam_eps);
    g.grad_clip_norm = cfg.grad_clip_norm;
    g.lr_decay = cfg.lr_decay;
    let d = AdamConfig {
        lr: cfg.d_lr(),
        ..g.clone()
    };
    (g, d)
}

/// Component columns logged for a configuration, in CSV order.
pub fn log_columns(cfg: &TrainConfig) -> Vec<&'static str> {
    let f = &cfg.ablation;
    let mut cols = vec![component::ADV_TIME];
    if f.use_stft_loss {
        cols.push(component::STFT);
    }
    if f.use_freq_disc {
        cols.push(component::ADV_FREQ);
    }
    if f.use_time_losses {
        cols.push(component::TIME);
    }
    if cfg.weights.feature_matching > 0.0 {
        cols.push(component::FEATURE_MATCHING);
    }
    cols.push(component::D_TIME);
    if f.use_freq_disc {
        cols.push(component::D_FREQ);
    }
    cols
}

/// Per-step CSV: `step, wall_ms, total`, then one column per component.
/// Components absent from a step (e.g. during warm-up) are left empty.
pub struct TrainLog {
    writer: csv::Writer<File>,
    columns: Vec<&'static str>,
}

impl TrainLog {
    pub fn create(path: impl AsRef<Path>, cfg: &TrainConfig) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| VocoderError::io(path, e))?;
        let columns = log_columns(cfg);
        let mut writer = csv::Writer::from_writer(file);
        let mut header = vec!["step", "wall_ms", "total"];
        header.extend(&columns);
        writer.write_record(&header)?;
        Ok(TrainLog { writer, columns })
    }

    /// Keeps rows up to `step` of an existing log and appends after them.
    pub fn resume(path: impl AsRef<Path>, cfg: &TrainConfig, step: u64) -> Result<Self> {
        let path = path.as_ref();
        let mut kept = Vec::new();
        if path.exists() {
            let mut reader = csv::Reader::from_path(path)?;
            for row in reader.records() {
                let row = row?;
                let s: u64 = row.get(0).and_then(|v| v.parse().ok()).unwrap_or(u64::MAX);
                if s <= step {
                    kept.push(row);
                }
            }
        }
        let mut log = TrainLog::create(path, cfg)?;
        for row in kept {
            log.writer.write_record(&row)?;
        }
        log.writer.flush().map_err(|e| VocoderError::io(path, e))?;
        Ok(log)
    }

    pub fn append(&mut self, r: &StepReport) -> Result<()> {
        let mut row = vec![r.step.to_string(), format!("{:.3}", r.wall_ms), r.total.to_string()];
        for c in &self.columns {
            row.push(r.components.get(c).map(|v| v.to_string()).unwrap_or_default());
        }
        self.writer.write_record(&row)?;
        self.writer.flush().map_err(|e| VocoderError::io("train log", e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| VocoderError::io("train log", e))
    }
}
