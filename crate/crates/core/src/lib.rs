//! Unified mixed-modality audio-visual classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense tensors, a tape-based reverse-mode autodiff graph,
//!   Adam, and the binary checkpoint container.
//! * [`dsp`]: log-mel frontend, spectral pooling, SpecAugment and
//!   SNR-calibrated noise mixing.
//! * [`video`]: frame sampling, visual corruption and patch embedding.
//! * [`fusion`]: self/cross attention, bottleneck fusion, the audio-to-video
//!   fusion block and the shared pre-norm encoder.
//! * [`model`]: the unified classifier, modality dropout and the fusion
//!   baselines.
//! * [`distill`]: teacher models and the distillation loss.
//! * [`data`]: synthetic generator, labelling oracle, manifests and splits.
//! * [`bench`]: training, evaluation, noise sweeps and FLOPs/parameter
//!   accounting.

pub mod bench;
pub mod config;
pub mod data;
pub mod distill;
pub mod dsp;
pub mod error;
pub mod label;
pub mod fusion;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod rng;
pub mod video;

pub use error::{Error, Result};
pub use numerics::{Real, Tensor};
