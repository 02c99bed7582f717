use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use vocoder::autodiff::Real;
use vocoder::checkpoint;
use vocoder::config::{MelConfig, StftLossConfig};
use vocoder::data::{list_wavs, Dataset};
use vocoder::dsp::{mel_features, read_wav};
use vocoder::features::write_mel_cache;
use vocoder::manifest::{config_from_json, RunManifest};
use vocoder::plot::{loss_curve_svgs, spectrogram_pair_svg, LossLog};
use vocoder::session;
use vocoder::suites::{self, Scope};
use vocoder::synth::Synthesizer;
use vocoder::train::Trainer;
use vocoder::{Ablation, Precision, TrainConfig, VocoderError};

/// Invalid arguments or unusable input files; exits with code 2.
#[derive(Debug)]
pub struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(e: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(InputError(e.to_string()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input_error(format!("{what} {} not found", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(input_error(format!("{what} {} is not a directory", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn extract(input: &Path, out: &Path, mel_cfg: Option<&Path>) -> Result<ExitCode> {
    require_dir(input, "input")?;
    let cfg = match mel_cfg {
        Some(p) => serde_json::from_str::<MelConfig>(&read_text(p)?).map_err(input_error)?,
        None => MelConfig::default(),
    };
    cfg.validate().map_err(input_error)?;
    let wavs = list_wavs(input).map_err(input_error)?;
    if wavs.is_empty() {
        return Err(input_error(format!("{}: no input files", input.display())));
    }
    create_dir(out)?;
    let mut failed = 0;
    for wav in &wavs {
        let stem = wav.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let dest = out.join(format!("{stem}.tfv"));
        let result = read_wav(wav)
            .and_then(|clip| mel_features(&clip, &cfg))
            .and_then(|mel| write_mel_cache(&dest, &mel, &cfg).map(|()| mel.frames()));
        match result {
            Ok(frames) => println!("{}: {frames} frames -> {}", wav.display(), dest.display()),
            Err(e) => {
                log::error!("{}: {e}", wav.display());
                eprintln!("{}: {e}", wav.display());
                failed += 1;
            }
        }
    }
    if failed == wavs.len() {
        anyhow::bail!("all {failed} input files failed");
    }
    Ok(ExitCode::SUCCESS)
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub ablation: Option<String>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
}

fn resolve_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match (&args.resume, &args.config) {
        (Some(ckpt), _) => {
            require_file(ckpt, "checkpoint")?;
            let c = vocoder::container::Container::load(ckpt).map_err(input_error)?;
            checkpoint::stored_config(&c).map_err(input_error)?
        }
        (None, Some(path)) => config_from_json(&read_text(path)?).map_err(input_error)?,
        (None, None) => TrainConfig::default(),
    };
    if let Some(name) = &args.ablation {
        cfg = cfg.with_ablation(Ablation::from_str(name).map_err(input_error)?);
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(input_error)?;
    Ok(cfg)
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let cfg = resolve_config(&args)?;
    require_dir(&args.data, "data")?;
    let data = Dataset::scan(&args.data, &cfg).map_err(input_error)?;
    match cfg.precision {
        Precision::F32 => train_as::<f32>(&args, &cfg, &data),
        Precision::F64 => train_as::<f64>(&args, &cfg, &data),
    }
}

fn train_as<T: Real>(args: &TrainArgs, cfg: &TrainConfig, data: &Dataset) -> Result<ExitCode> {
    let mut manifest = RunManifest::new(cfg, data);
    let mut tr = match &args.resume {
        Some(ckpt) => {
            let mut tr = checkpoint::load::<T>(ckpt).map_err(input_error)?;
            tr.cfg.steps = cfg.steps;
            manifest.resumed_from = Some(ckpt.display().to_string());
            println!("resuming {} at step {}", ckpt.display(), tr.step);
            tr
        }
        None => Trainer::<T>::new(cfg)?,
    };
    println!(
        "training {} steps ({} precision, ablation flags {:?}) on {} files",
        cfg.steps,
        T::NAME,
        cfg.ablation,
        data.items().len()
    );
    let every = cfg.checkpoint_every.clamp(1, 100);
    let summary = session::run(&mut tr, data, &args.out, &manifest, |r| {
        if r.step % every == 0 || r.step == cfg.steps {
            let parts: Vec<String> = r.components.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
            println!("step {:>6} total={:.4} {} ({:.0} ms)", r.step, r.total, parts.join(" "), r.wall_ms);
        }
    })
    .map_err(|e| match e {
        VocoderError::NonFinite { .. } => anyhow::Error::new(e).context("training diverged"),
        other => anyhow::Error::new(other),
    })?;
    for c in &summary.checkpoints {
        println!("checkpoint {}", c.display());
    }
    println!("log {}", args.out.join(session::LOG_FILE).display());
    Ok(ExitCode::SUCCESS)
}

pub fn synth(ckpt: &Path, input: &Path, out: &Path) -> Result<ExitCode> {
    require_file(ckpt, "checkpoint")?;
    require_file(input, "input")?;
    let synth = Synthesizer::load(ckpt).map_err(input_error)?;
    let mel = vocoder::features::load_features(input, synth.mel_config()).map_err(input_error)?;
    let result = synth.synthesize(&mel)?;
    vocoder::dsp::write_wav(out, &result.clip)?;
    println!(
        "wrote {}: {} samples from {} frames, realtime factor {:.2}",
        out.display(),
        result.clip.len(),
        result.frames,
        result.realtime_factor()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(scope: &str, eps: f64, tol: f64, seed: u64) -> Result<ExitCode> {
    let scope = Scope::from_str(scope).map_err(input_error)?;
    if !(eps > 0.0 && tol > 0.0) {
        return Err(input_error("eps and tol must be positive"));
    }
    let start = std::time::Instant::now();
    let reports = suites::run(scope, seed, eps, tol)?;
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(8).max(8);
    println!("{:<width$}  {:>7}  {:>7}  {:>11}  status", "function", "checked", "skipped", "max_rel_err");
    let mut failed = 0;
    for r in &reports {
        let rep = &r.report;
        let ok = rep.passed();
        println!(
            "{:<width$}  {:>7}  {:>7}  {:>11.3e}  {}",
            r.name,
            rep.checked,
            rep.skipped.len(),
            rep.max_rel_err,
            if ok { "pass" } else { "FAIL" }
        );
        if !ok {
            failed += 1;
            if let Some(msg) = &rep.failure {
                println!("    {msg}");
            }
            if let Some(w) = rep.worst {
                println!(
                    "    worst coordinate {}: analytic {:.10e} numeric {:.10e} (rel err {:.3e})",
                    w.index, w.analytic, w.numeric, w.rel_err
                );
            }
        }
    }
    println!(
        "scope {scope}: {} checked, {failed} failed, tol {tol:e}, eps {eps:e}, {:.1} s",
        reports.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn eval(log: Option<&Path>, out: &Path, spectrogram: Option<&[PathBuf]>) -> Result<ExitCode> {
    if log.is_none() && spectrogram.is_none() {
        return Err(input_error("nothing to do: give --log and/or --spectrogram"));
    }
    create_dir(out)?;
    if let Some(log) = log {
        require_file(log, "log")?;
        let table = LossLog::read(log).map_err(input_error)?;
        let curves = loss_curve_svgs(&table);
        for (name, svg) in &curves {
            let path = out.join(format!("loss_{name}.svg"));
            std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        }
        println!("{} curves from {} steps -> {}", curves.len(), table.steps.len(), out.display());
    }
    if let Some([a, b]) = spectrogram {
        require_file(a, "wav")?;
        require_file(b, "wav")?;
        let ca = read_wav(a).map_err(input_error)?;
        let cb = read_wav(b).map_err(input_error)?;
        if ca.len() != cb.len() {
            return Err(input_error(format!(
                "length mismatch: {} has {} samples, {} has {}",
                a.display(),
                ca.len(),
                b.display(),
                cb.len()
            )));
        }
        let (xa, xb) = (ca.to_f64(), cb.to_f64());
        let loss = vocoder::losses::multi_res_stft_distance(&xa, &xb, &StftLossConfig::default()).map_err(input_error)?;
        let label = |p: &Path| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let svg = spectrogram_pair_svg(&xa, &xb, (&label(a), &label(b)), &MelConfig::default().stft())?;
        let path = out.join("spectrogram.svg");
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        println!("multi_res_stft_loss {loss}");
        println!("spectrograms -> {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn smoke_data(out: &Path, count: usize, seconds: f64, seed: u64) -> Result<ExitCode> {
    if count == 0 || !(seconds > 0.0) {
        return Err(input_error("count and seconds must be positive"));
    }
    let samples = (seconds * vocoder::dsp::SAMPLE_RATE as f64).round() as usize;
    for p in vocoder::smoke::write_smoke_dataset(out, count, samples, seed)? {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
