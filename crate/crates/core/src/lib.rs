//! Neural vocoder with time- and frequency-domain adversarial training.
//!
//! A convolutional generator upsamples log-mel frames 240× to 24 kHz audio.
//! It is trained against a multi-scale waveform discriminator and an
//! STFT-domain discriminator, with multi-resolution STFT and time-domain
//! reconstruction losses. All network math runs on the in-repo
//! [`autodiff`] engine.

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod data;
pub mod discriminators;
pub mod dsp;
pub mod error;
pub mod features;
pub mod generator;
pub mod losses;
pub mod manifest;
mod nn;
pub mod optim;
pub mod params;
pub mod plot;
pub mod session;
pub mod smoke;
pub mod suites;
pub mod synth;
pub mod train;

pub use autodiff;
pub use config::{Ablation, AblationFlags, Precision, TrainConfig};
pub use error::{Result, VocoderError};
