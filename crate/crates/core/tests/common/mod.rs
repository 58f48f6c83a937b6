#![allow(dead_code)]

pub mod grad;
pub mod spectral;

use rand::Rng as _;
use uffia_core::dsp::MelConfig;
use uffia_core::model::{ModelConfig, ModelInput};
use uffia_core::numerics::{Real, Tensor};
use uffia_core::rng;

/// A model small enough for finite-difference checks.
pub fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        d: 8,
        heads: 2,
        ffn: 12,
        layers: 1,
        patch: 4,
        image: 8,
        frames: 2,
        native_frames: 3,
        conv_channels: vec![2, 3],
        audio_windows: 2,
        head_hidden: 6,
        simpf_k: 0.5,
        mel_frames: 16,
        mel_bins: 8,
        audio_patch: 4,
        bottleneck_tokens: 2,
        audio_norm: [0.0, 1.0],
    }
}

pub fn uniform(shape: &[usize], lo: Real, hi: Real, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi)).unwrap()
}

/// Inputs in the shapes the unified model consumes (pooled mel, sampled frames).
pub fn student_input(cfg: &ModelConfig, seed: u64) -> ModelInput {
    ModelInput {
        audio: Some(uniform(&[cfg.pooled_frames(), cfg.mel_bins], -2.0, 2.0, seed)),
        video: Some(uniform(&[cfg.frames, 3, cfg.image, cfg.image], 0.0, 1.0, seed + 1)),
    }
}

/// Inputs in the shapes the baselines and teachers consume (full mel, all frames).
pub fn full_input(cfg: &ModelConfig, seed: u64) -> ModelInput {
    ModelInput {
        audio: Some(uniform(&[cfg.mel_frames, cfg.mel_bins], -2.0, 2.0, seed)),
        video: Some(uniform(&[cfg.native_frames, 3, cfg.image, cfg.image], 0.0, 1.0, seed + 1)),
    }
}

/// The desk profile cut down for fast training tests: 16×16 frames and a
/// 32-frame, 32-bin mel.
pub fn small_run_cfg() -> (ModelConfig, MelConfig) {
    let arch = ModelConfig { image: 16, patch: 8, ..ModelConfig::default() };
    (arch, MelConfig::default())
}
