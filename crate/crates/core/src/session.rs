//! Training runs on disk: log, periodic checkpoints, manifest and
//! diagnostic state on failure.

use std::path::{Path, PathBuf};

use autodiff::Real;

use crate::checkpoint;
use crate::data::Dataset;
use crate::error::{Result, VocoderError};
use crate::manifest::RunManifest;
use crate::train::{StepReport, TrainLog, Trainer};

pub const LOG_FILE: &str = "train_log.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LATEST_CHECKPOINT: &str = "latest.tfv";

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:07}.tfv"))
}

pub fn diagnostic_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("diagnostic_step_{step:07}.tfv"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub first_step: u64,
    pub last_step: u64,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains from the trainer's current step up to `cfg.steps`, appending to
/// the log in `out` and checkpointing every `cfg.checkpoint_every` steps and
/// at the end. A non-finite loss saves the current state as a diagnostic
/// checkpoint before the error is returned.
pub fn run<T: Real>(
    tr: &mut Trainer<T>,
    data: &Dataset,
    out: &Path,
    manifest: &RunManifest,
    mut on_step: impl FnMut(&StepReport),
) -> Result<RunSummary> {
    std::fs::create_dir_all(out).map_err(|e| VocoderError::io(out, e))?;
    manifest.save(out.join(MANIFEST_FILE))?;
    let log_path = out.join(LOG_FILE);
    let mut log = if tr.step == 0 {
        TrainLog::create(&log_path, &tr.cfg)?
    } else {
        TrainLog::resume(&log_path, &tr.cfg, tr.step)?
    };
    let first_step = tr.step + 1;
    let every = tr.cfg.checkpoint_every;
    let mut checkpoints = Vec::new();
    while tr.step < tr.cfg.steps {
        let report = match tr.step_on(data) {
            Ok(r) => r,
            Err(e @ VocoderError::NonFinite { .. }) => {
                let path = diagnostic_path(out, tr.step + 1);
                log::error!("{e}; writing diagnostic checkpoint {}", path.display());
                checkpoint::save(&path, tr)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        log.append(&report)?;
        on_step(&report);
        if (every > 0 && tr.step % every == 0) || tr.step == tr.cfg.steps {
            let path = checkpoint_path(out, tr.step);
            let c = checkpoint::to_container(tr)?;
            c.save(&path)?;
            c.save(out.join(LATEST_CHECKPOINT))?;
            checkpoints.push(path);
        }
    }
    log.flush()?;
    Ok(RunSummary {
        first_step,
        last_step: tr.step,
        checkpoints,
    })
}
