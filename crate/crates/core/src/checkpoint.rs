//! Training state persistence in the named-array container.

use std::path::Path;

use autodiff::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Precision, TrainConfig};
use crate::container::Container;
use crate::discriminators::{FreqDiscriminator, TimeDiscriminator};
use crate::error::{Result, VocoderError};
use crate::generator::Generator;
use crate::optim::Adam;
use crate::params::ModelParams;
use crate::train::Trainer;

pub const FORMAT_VERSION: u32 = 1;

fn precision_of<T: Real>() -> Precision {
    if T::BYTES == 4 {
        Precision::F32
    } else {
        Precision::F64
    }
}

fn rng_bytes(rng: &ChaCha8Rng) -> Vec<u8> {
    let mut out = rng.get_seed().to_vec();
    out.extend_from_slice(&rng.get_stream().to_le_bytes());
    out.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    out
}

fn rng_from_bytes(b: &[u8]) -> Result<ChaCha8Rng> {
    if b.len() != 56 {
        return Err(VocoderError::Format(format!("rng state has {} bytes, expected 56", b.len())));
    }
    let mut rng = ChaCha8Rng::from_seed(b[..32].try_into().expect("32 bytes"));
    rng.set_stream(u64::from_le_bytes(b[32..40].try_into().expect("8 bytes")));
    rng.set_word_pos(u128::from_le_bytes(b[40..56].try_into().expect("16 bytes")));
    Ok(rng)
}

fn u64_from(c: &Container, name: &str) -> Result<u64> {
    let b = c.bytes(name)?;
    let arr: [u8; 8] = b
        .try_into()
        .map_err(|_| VocoderError::Format(format!("{name} must hold 8 bytes")))?;
    Ok(u64::from_le_bytes(arr))
}

fn put_params<T: Real>(c: &mut Container, prefix: &str, p: &ModelParams<T>) -> Result<()> {
    for (name, t) in p.iter() {
        c.insert_tensor(format!("{prefix}/{name}"), t)?;
    }
    Ok(())
}

fn get_params<T: Real>(c: &Container, prefix: &str) -> Result<ModelParams<T>> {
    let mut p = ModelParams::new();
    let lead = format!("{prefix}/");
    for name in c.names().filter(|n| n.starts_with(&lead)) {
        p.insert(&name[lead.len()..], c.tensor(name)?)?;
    }
    Ok(p)
}

fn put_adam<T: Real>(c: &mut Container, prefix: &str, opt: &Adam<T>) -> Result<()> {
    c.insert_bytes(format!("{prefix}.t"), &opt.t.to_le_bytes())?;
    for (name, m) in &opt.m {
        c.insert_tensor(format!("{prefix}.m/{name}"), m)?;
    }
    for (name, v) in &opt.v {
        c.insert_tensor(format!("{prefix}.v/{name}"), v)?;
    }
    Ok(())
}

fn load_adam<T: Real>(c: &Container, prefix: &str, opt: &mut Adam<T>) -> Result<()> {
    opt.t = u64_from(c, &format!("{prefix}.t"))?;
    for (name, m) in opt.m.iter_mut() {
        let t = c.tensor::<T>(&format!("{prefix}.m/{name}"))?;
        if t.shape() != m.shape() {
            return Err(VocoderError::layer(name.as_str(), "optimizer moment shape mismatch"));
        }
        *m = t;
    }
    for (name, v) in opt.v.iter_mut() {
        let t = c.tensor::<T>(&format!("{prefix}.v/{name}"))?;
        if t.shape() != v.shape() {
            return Err(VocoderError::layer(name.as_str(), "optimizer moment shape mismatch"));
        }
        *v = t;
    }
    Ok(())
}

/// Serializes the complete training state.
pub fn to_container<T: Real>(tr: &Trainer<T>) -> Result<Container> {
    let mut c = Container::new();
    c.insert_bytes("format_version", &FORMAT_VERSION.to_le_bytes())?;
    c.insert_bytes("step", &tr.step.to_le_bytes())?;
    c.insert_bytes("config", tr.cfg.to_json().as_bytes())?;
    c.insert_bytes("rng", &rng_bytes(&tr.rng))?;
    put_params(&mut c, "g", tr.generator.params())?;
    put_params(&mut c, "dt", tr.time_disc.params())?;
    if let Some(d) = &tr.freq_disc {
        put_params(&mut c, "df", d.params())?;
    }
    put_adam(&mut c, "opt_g", &tr.opt_g)?;
    put_adam(&mut c, "opt_dt", &tr.opt_time)?;
    if let Some(o) = &tr.opt_freq {
        put_adam(&mut c, "opt_df", o)?;
    }
    Ok(c)
}

/// Reads the configuration stored in a checkpoint.
pub fn stored_config(c: &Container) -> Result<TrainConfig> {
    let version = c.bytes("format_version")?;
    let expected = FORMAT_VERSION.to_le_bytes();
    if version != expected {
        return Err(VocoderError::Version {
            found: format!("{version:?}"),
            expected: format!("{expected:?}"),
        });
    }
    let text = std::str::from_utf8(c.bytes("config")?)
        .map_err(|_| VocoderError::Format("config is not UTF-8".into()))?;
    TrainConfig::from_json(text)
}

/// Restores a trainer from a checkpoint container.
pub fn from_container<T: Real>(c: &Container) -> Result<Trainer<T>> {
    let cfg = stored_config(c)?;
    if cfg.precision != precision_of::<T>() {
        return Err(VocoderError::Format(format!(
            "checkpoint precision {:?} differs from requested {:?}",
            cfg.precision,
            precision_of::<T>()
        )));
    }
    let generator = Generator::from_params(&cfg.generator, cfg.ablation.use_residual_upsample, get_params(c, "g")?)?;
    let time_disc = TimeDiscriminator::from_params(&cfg.time_disc, get_params(c, "dt")?)?;
    let freq_disc = if cfg.ablation.use_freq_disc {
        Some(FreqDiscriminator::from_params(&cfg.freq_disc, get_params(c, "df")?)?)
    } else {
        None
    };
    let rng = rng_from_bytes(c.bytes("rng")?)?;
    let mut tr = Trainer::assemble(&cfg, generator, time_disc, freq_disc, rng);
    tr.step = u64_from(c, "step")?;
    load_adam(c, "opt_g", &mut tr.opt_g)?;
    load_adam(c, "opt_dt", &mut tr.opt_time)?;
    if let Some(o) = tr.opt_freq.as_mut() {
        load_adam(c, "opt_df", o)?;
    }
    Ok(tr)
}

pub fn save<T: Real>(path: impl AsRef<Path>, tr: &Trainer<T>) -> Result<()> {
    to_container(tr)?.save(path)
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<Trainer<T>> {
    from_container(&Container::load(path)?)
}

/// Generator alone, for synthesis, in whatever precision the checkpoint
/// stores, converted to `T`.
pub fn load_generator<T: Real>(path: impl AsRef<Path>) -> Result<Generator<T>> {
    let c = Container::load(path)?;
    let cfg = stored_config(&c)?;
    let params: ModelParams<T> = match cfg.precision {
        Precision::F32 => get_params::<f32>(&c, "g")?.cast(),
        Precision::F64 => get_params::<f64>(&c, "g")?.cast(),
    };
    Generator::from_params(&cfg.generator, cfg.ablation.use_residual_upsample, params)
}
