//! Audio frontend: waveform → log-mel → spectral pooling, plus the
//! augmentation and corruption applied along the way.

pub mod augment;
pub mod mel;
pub mod noise;
pub mod simpf;
pub mod wav;

pub use augment::{Mask, MaskAxis, SpecAugment};
pub use mel::{stft_log_mel, MelConfig, MelFeature, MelFilterbank};
pub use noise::{mix_at_snr, NoiseKind, NoiseSpec};
pub use simpf::simpf_pool;

use crate::error::{Error, Result};
use crate::numerics::Real;

/// Canonical sample rate after downsampling.
pub const SAMPLE_RATE: u32 = 64_000;
/// Samples in a canonical 2-second clip.
pub const CLIP_SAMPLES: usize = 128_000;

/// Mono audio.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<Real>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<Real>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::input("sample rate must be positive"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean-square amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / self.samples.len() as f64
    }

    /// Linear-interpolation resampling.
    pub fn resample(&self, target: u32) -> Result<Waveform> {
        if target == 0 {
            return Err(Error::input("target sample rate must be positive"));
        }
        if target == self.sample_rate || self.samples.is_empty() {
            return Waveform::new(self.samples.clone(), target);
        }
        let ratio = self.sample_rate as f64 / target as f64;
        let n_out = ((self.samples.len() as f64) / ratio).round().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let out = (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = (pos - lo as f64) as Real;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        Waveform::new(out, target)
    }
}
