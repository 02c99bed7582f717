use std::path::PathBuf;

use autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocoderError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav: {0}")]
    Wav(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{layer}: {msg}")]
    Layer { layer: String, msg: String },
    #[error("container: {0}")]
    Format(String),
    #[error("container checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("format version mismatch: found {found}, expected {expected}")]
    Version { found: String, expected: String },
    #[error("no usable audio files:\n{}", .0.join("\n"))]
    NoUsableFiles(Vec<String>),
    #[error("{0}")]
    Data(String),
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("non-finite loss at step {step}: {components}")]
    NonFinite { step: u64, components: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl VocoderError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VocoderError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn layer(layer: impl Into<String>, msg: impl Into<String>) -> Self {
        VocoderError::Layer {
            layer: layer.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = VocoderError> = std::result::Result<T, E>;
