//! Finite-difference gradient suites over operators, losses and models,
//! all evaluated in `f64`.

use std::fmt;
use std::str::FromStr;

use autodiff::gradcheck::{grad_check, op_suite, project, random_tensor, NamedReport};
use autodiff::{Graph, Result as TensorResult, Tensor, TensorError, Var};

use crate::config::{StftConfig, StftLossConfig, TimeLossConfig, TrainConfig};
use crate::discriminators::{FreqDiscriminator, TimeDiscriminator};
use crate::dsp::{self, MAGNITUDE_FLOOR};
use crate::error::{Result, VocoderError};
use crate::generator::Generator;
use crate::losses::{self, GeneratorLossConfig};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Ops,
    Losses,
    Models,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Ops, Scope::Losses, Scope::Models];
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Ops => "ops",
            Scope::Losses => "losses",
            Scope::Models => "models",
        })
    }
}

impl FromStr for Scope {
    type Err = VocoderError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ops" => Ok(Scope::Ops),
            "losses" => Ok(Scope::Losses),
            "models" => Ok(Scope::Models),
            _ => Err(VocoderError::Config(format!(
                "unknown gradcheck scope {s:?} (expected ops, losses or models)"
            ))),
        }
    }
}

pub fn run(scope: Scope, seed: u64, eps: f64, tol: f64) -> Result<Vec<NamedReport>> {
    match scope {
        Scope::Ops => Ok(ops(seed, eps, tol)),
        Scope::Losses => Ok(loss_suite(seed, eps, tol)),
        Scope::Models => model_suite(seed, eps, tol),
    }
}

fn check<F>(name: impl Into<String>, x: &Tensor<f64>, eps: f64, tol: f64, f: F) -> NamedReport
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let report = grad_check(|g, v| f(g, v).map_err(to_tensor_err), x, eps, tol);
    NamedReport {
        name: name.into(),
        report,
    }
}

fn to_tensor_err(e: VocoderError) -> TensorError {
    match e {
        VocoderError::Tensor(t) => t,
        other => TensorError::Invalid {
            op: "gradcheck",
            msg: other.to_string(),
        },
    }
}

fn lift(r: TensorResult<Var>) -> Result<Var> {
    Ok(r?)
}

/// Every graph operator plus the signal-processing compositions built on them.
pub fn ops(seed: u64, eps: f64, tol: f64) -> Vec<NamedReport> {
    let mut out = op_suite(seed, eps, tol);
    let x = random_tensor(seed ^ 0x51, &[2, 70], 1.0);
    out.push(check("dsp/frame_signal", &x, eps, tol, |g, x| {
        let y = dsp::frame_signal(g, x, 16, 6)?;
        lift(project(g, y, 11))
    }));
    let plain = StftConfig::new(32, 8, 24);
    out.push(check("dsp/stft", &x, eps, tol, |g, x| {
        let y = dsp::stft(g, x, &plain)?;
        lift(project(g, y, 12))
    }));
    let centered = StftConfig::new(32, 8, 32).centered(true);
    out.push(check("dsp/stft/centered", &x, eps, tol, |g, x| {
        let y = dsp::stft(g, x, &centered)?;
        lift(project(g, y, 13))
    }));
    out.push(check("dsp/magnitude", &x, eps, tol, |g, x| {
        let s = dsp::stft(g, x, &plain)?;
        let m = dsp::magnitude(g, s, MAGNITUDE_FLOOR)?;
        lift(project(g, m, 14))
    }));
    out
}

fn small_stft() -> StftLossConfig {
    StftLossConfig {
        resolutions: vec![(64, 16, 48), (128, 32, 96), (32, 8, 24)],
    }
}

fn small_time() -> TimeLossConfig {
    TimeLossConfig {
        scales: vec![(1, 1), (24, 12), (48, 24), (96, 48)],
    }
}

/// Reconstruction and adversarial objectives, differentiated with respect to
/// the generated signal (or logits) with the reference held fixed.
pub fn loss_suite(seed: u64, eps: f64, tol: f64) -> Vec<NamedReport> {
    let mut out = Vec::new();
    let target = random_tensor(seed ^ 0x101, &[2, 300], 0.8);
    let estimate = random_tensor(seed ^ 0x102, &[2, 300], 0.8);
    let one = StftConfig::new(64, 16, 48);

    let tgt = target.clone();
    out.push(check("loss/spectral_convergence", &estimate, eps, tol, move |g, y| {
        let x = g.constant(tgt.shape().to_vec(), tgt.data().to_vec())?;
        losses::spectral_convergence(g, x, y, &one)
    }));
    let tgt = target.clone();
    out.push(check("loss/log_magnitude", &estimate, eps, tol, move |g, y| {
        let x = g.constant(tgt.shape().to_vec(), tgt.data().to_vec())?;
        losses::log_magnitude_loss(g, x, y, &one)
    }));
    let tgt = target.clone();
    out.push(check("loss/multi_res_stft", &estimate, eps, tol, move |g, y| {
        let x = g.constant(tgt.shape().to_vec(), tgt.data().to_vec())?;
        losses::multi_res_stft_loss(g, x, y, &small_stft())
    }));

    let n = StftLossConfig::default().min_length();
    let long_t = random_tensor(seed ^ 0x103, &[n], 0.5);
    let long_e = random_tensor(seed ^ 0x104, &[n], 0.5);
    let tgt = long_t.clone();
    out.push(check("loss/multi_res_stft/default_resolutions", &long_e, eps, tol, move |g, y| {
        let x = g.constant(tgt.shape().to_vec(), tgt.data().to_vec())?;
        losses::multi_res_stft_loss(g, x, y, &StftLossConfig::default())
    }));

    for scale in small_time().scales {
        for (k, part) in ["energy", "mean", "phase"].into_iter().enumerate() {
            let tgt = target.clone();
            out.push(check(
                format!("loss/time/{part}/{}x{}", scale.0, scale.1),
                &estimate,
                eps,
                tol,
                move |g, y| {
                    let x = g.constant(tgt.shape().to_vec(), tgt.data().to_vec())?;
                    let (e, t, p) = losses::time_domain_losses(g, x, y, scale)?;
                    Ok([e, t, p][k])
                },
            ));
        }
    }
    let tgt = target.clone();
    out.push(check("loss/time/total", &estimate, eps, tol, move |g, y| {
        let x = g.constant(tgt.shape().to_vec(), tgt.data().to_vec())?;
        losses::total_time_loss(g, x, y, &small_time())
    }));
    let tl = TimeLossConfig::default();
    let tn = tl.min_length() + 240;
    let tt = random_tensor(seed ^ 0x105, &[tn], 0.5);
    let te = random_tensor(seed ^ 0x106, &[tn], 0.5);
    out.push(check("loss/time/total/default_scales", &te, eps, tol, move |g, y| {
        let x = g.constant(tt.shape().to_vec(), tt.data().to_vec())?;
        losses::total_time_loss(g, x, y, &tl)
    }));

    // Logits spread over [-2, 2] so both hinge branches are exercised.
    let real = random_tensor(seed ^ 0x107, &[3, 2, 5], 2.0);
    let fake = random_tensor(seed ^ 0x108, &[3, 2, 5], 2.0);
    let split = |g: &mut Graph<f64>, v: Var| -> Result<Vec<Var>> {
        (0..3).map(|k| Ok(g.slice(v, 0, k, k + 1)?)).collect()
    };
    let f2 = fake.clone();
    out.push(check("loss/hinge_discriminator/real", &real, eps, tol, move |g, r| {
        let fv = g.constant(f2.shape().to_vec(), f2.data().to_vec())?;
        let (rs, fs) = (split(g, r)?, split(g, fv)?);
        losses::hinge_d_loss(g, &rs, &fs)
    }));
    let r2 = real.clone();
    out.push(check("loss/hinge_discriminator/fake", &fake, eps, tol, move |g, f| {
        let rv = g.constant(r2.shape().to_vec(), r2.data().to_vec())?;
        let (rs, fs) = (split(g, rv)?, split(g, f)?);
        losses::hinge_d_loss(g, &rs, &fs)
    }));
    out.push(check("loss/hinge_generator", &fake, eps, tol, move |g, f| {
        let fs = split(g, f)?;
        losses::hinge_g_loss(g, &fs)
    }));
    let feats_real = random_tensor(seed ^ 0x109, &[2, 3, 8], 1.0);
    let feats_fake = random_tensor(seed ^ 0x10a, &[2, 3, 8], 1.0);
    out.push(check("loss/feature_matching", &feats_fake, eps, tol, move |g, f| {
        let r = g.constant(feats_real.shape().to_vec(), feats_real.data().to_vec())?;
        let real = vec![vec![g.slice(r, 1, 0, 1)?, g.slice(r, 1, 1, 3)?]];
        let fake = vec![vec![g.slice(f, 1, 0, 1)?, g.slice(f, 1, 1, 3)?]];
        losses::feature_matching(g, &real, &fake)
    }));
    out
}

fn substituted<F>(
    params: &ModelParams<f64>,
    name: &str,
    g: &mut Graph<f64>,
    v: Var,
    body: F,
) -> Result<Var>
where
    F: FnOnce(&mut Graph<f64>, &crate::params::Bound) -> Result<Var>,
{
    let mut p = params.bind(g, false);
    p.substitute(name, v)?;
    body(g, &p)
}

fn param(params: &ModelParams<f64>, name: &str) -> Result<Tensor<f64>> {
    params
        .get(name)
        .map(|t| t.clone().with_requires_grad(false))
        .ok_or_else(|| VocoderError::layer(name, "parameter missing from model"))
}

/// Networks at desk scale: gradients with respect to inputs and selected
/// parameters, including the full weighted generator objective.
pub fn model_suite(seed: u64, eps: f64, tol: f64) -> Result<Vec<NamedReport>> {
    let cfg = TrainConfig::default();
    let gen = Generator::<f64>::new(&cfg.generator, true, seed ^ 1)?;
    let td = TimeDiscriminator::<f64>::new(&cfg.time_disc, seed ^ 2)?;
    let fd = FreqDiscriminator::<f64>::new(&cfg.freq_disc, seed ^ 3)?;
    let n_mels = cfg.mel.n_mels;
    let mut out = Vec::new();

    let mel = random_tensor(seed ^ 0x201, &[1, 2, n_mels], 1.0);
    out.push(check("model/generator/mel", &mel, eps, tol, |g, m| {
        let p = gen.params().bind(g, false);
        let y = gen.forward(g, &p, m)?;
        lift(project(g, y, 21))
    }));
    for name in ["up2.repeat.weight", "res0.1.pointwise.weight", "post.bias"] {
        let w = param(gen.params(), name)?;
        let (gen, mel) = (&gen, &mel);
        out.push(check(format!("model/generator/{name}"), &w, eps, tol, move |g, v| {
            substituted(gen.params(), name, g, v, |g, p| {
                let m = g.constant(mel.shape().to_vec(), mel.data().to_vec())?;
                let y = gen.forward(g, p, m)?;
                lift(project(g, y, 22))
            })
        }));
    }

    let wave = random_tensor(seed ^ 0x202, &[1, 1, 320], 0.5);
    out.push(check("model/time_discriminator/input", &wave, eps, tol, |g, x| {
        let p = td.params().bind(g, false);
        let outs = td.forward(g, &p, x)?;
        let mut acc = None;
        for (k, o) in outs.iter().enumerate() {
            let s = project(g, o.logits, 30 + k as u64)?;
            acc = Some(match acc {
                None => s,
                Some(a) => g.add(a, s)?,
            });
        }
        acc.ok_or_else(|| VocoderError::Data("no discriminator scales".into()))
    }));
    let wave = random_tensor(seed ^ 0x203, &[1, 1, 600], 0.5);
    out.push(check("model/freq_discriminator/input", &wave, eps, tol, |g, x| {
        let p = fd.params().bind(g, false);
        let o = fd.forward(g, &p, x)?;
        Ok(g.mean(o.logits)?)
    }));

    // Full generator objective with every term active.
    let frames = cfg.stft_loss.min_length().div_ceil(cfg.generator.hop_length());
    let len = frames * cfg.generator.hop_length();
    let mel = random_tensor(seed ^ 0x204, &[1, frames, n_mels], 1.0);
    let target = random_tensor(seed ^ 0x205, &[1, 1, len], 0.5);
    let loss_cfg = GeneratorLossConfig {
        weights: cfg.weights.clone(),
        stft: Some(cfg.stft_loss.clone()),
        time: Some(cfg.time_loss.clone()),
    };
    let w = param(gen.params(), "post.weight")?;
    out.push(check("model/generator_objective/post.weight", &w, eps, tol, |g, v| {
        substituted(gen.params(), "post.weight", g, v, |g, p| {
            let m = g.constant(mel.shape().to_vec(), mel.data().to_vec())?;
            let x = g.constant(target.shape().to_vec(), target.data().to_vec())?;
            let y = gen.forward(g, p, m)?;
            let tp = td.params().bind(g, false);
            let fp = fd.params().bind(g, false);
            let obj = losses::generator_total_loss(g, x, y, Some((&td, &tp)), Some((&fd, &fp)), &loss_cfg)?;
            Ok(obj.total)
        })
    }));

    let fake = random_tensor(seed ^ 0x206, &[1, 1, len], 0.5);
    let w = param(td.params(), "scale0.entry.weight")?;
    out.push(check("model/discriminator_objective/scale0.entry.weight", &w, eps, tol, |g, v| {
        let x = g.constant(target.shape().to_vec(), target.data().to_vec())?;
        let y = g.constant(fake.shape().to_vec(), fake.data().to_vec())?;
        let fp = fd.params().bind(g, false);
        substituted(td.params(), "scale0.entry.weight", g, v, |g, p| {
            let obj = losses::discriminator_total_loss(g, x, y, (&td, p), Some((&fd, &fp)))?;
            Ok(obj.total)
        })
    }));
    let w = param(fd.params(), "head.weight")?;
    out.push(check("model/discriminator_objective/head.weight", &w, eps, tol, |g, v| {
        let x = g.constant(target.shape().to_vec(), target.data().to_vec())?;
        let y = g.constant(fake.shape().to_vec(), fake.data().to_vec())?;
        let tp = td.params().bind(g, false);
        substituted(fd.params(), "head.weight", g, v, |g, p| {
            let obj = losses::discriminator_total_loss(g, x, y, (&td, &tp), Some((&fd, p)))?;
            Ok(obj.total)
        })
    }));
    Ok(out)
}
