//! Run manifests: everything needed to repeat a training run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::container::write_atomic;
use crate::data::Dataset;
use crate::error::{Result, VocoderError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    /// Fully resolved configuration, defaults included.
    pub config: TrainConfig,
    pub inputs: Vec<InputDigest>,
    #[serde(default)]
    pub resumed_from: Option<String>,
}

impl RunManifest {
    pub fn new(cfg: &TrainConfig, data: &Dataset) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: data
                .items()
                .iter()
                .map(|it| InputDigest {
                    name: it.name.clone(),
                    sha256: it.digest.clone(),
                })
                .collect(),
            resumed_from: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VocoderError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Input names whose digests differ from `data`, or that are missing.
    pub fn mismatched_inputs(&self, data: &Dataset) -> Vec<String> {
        let mut out = Vec::new();
        for want in &self.inputs {
            match data.items().iter().find(|it| it.name == want.name) {
                Some(it) if it.digest == want.sha256 => {}
                _ => out.push(want.name.clone()),
            }
        }
        if data.items().len() != self.inputs.len() {
            for it in data.items() {
                if !self.inputs.iter().any(|w| w.name == it.name) {
                    out.push(it.name.clone());
                }
            }
        }
        out
    }
}

/// Reads a training config from either a plain config document or a run
/// manifest (whose embedded config is used).
pub fn config_from_json(text: &str) -> Result<TrainConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("tool_version").is_some() && value.get("config").is_some() {
        Ok(RunManifest::from_json(text)?.config)
    } else {
        TrainConfig::from_json(text)
    }
}
