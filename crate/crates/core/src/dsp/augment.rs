//! SpecAugment-style time and frequency masking.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dsp::MelFeature;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskAxis {
    Time,
    Freq,
}

/// A block of `width` consecutive frames (or mel bins) starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mask {
    pub axis: MaskAxis,
    pub start: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecAugment {
    pub time_masks: usize,
    pub freq_masks: usize,
    pub max_time_width: usize,
    pub max_freq_width: usize,
}

impl Default for SpecAugment {
    fn default() -> Self {
        Self {
            time_masks: 2,
            freq_masks: 2,
            max_time_width: 8,
            max_freq_width: 8,
        }
    }
}

impl SpecAugment {
    pub fn none() -> Self {
        Self {
            time_masks: 0,
            freq_masks: 0,
            max_time_width: 0,
            max_freq_width: 0,
        }
    }

    /// Draws mask positions: time masks first, then frequency masks; each
    /// mask draws its width uniformly in `0..=max` and then its start.
    pub fn plan(&self, frames: usize, bins: usize, rng: &mut Rng) -> Result<Vec<Mask>> {
        if self.max_time_width > frames || self.max_freq_width > bins {
            return Err(Error::config(format!(
                "mask widths ({}, {}) exceed feature extents ({frames}, {bins})",
                self.max_time_width, self.max_freq_width
            )));
        }
        let mut masks = Vec::with_capacity(self.time_masks + self.freq_masks);
        for (axis, count, max, extent) in [
            (MaskAxis::Time, self.time_masks, self.max_time_width, frames),
            (MaskAxis::Freq, self.freq_masks, self.max_freq_width, bins),
        ] {
            for _ in 0..count {
                let width = rng.random_range(0..=max);
                let start = rng.random_range(0..=extent - width);
                masks.push(Mask { axis, start, width });
            }
        }
        Ok(masks)
    }

    pub fn apply(&self, mel: &MelFeature, rng: &mut Rng) -> Result<MelFeature> {
        let masks = self.plan(mel.frames(), mel.bins(), rng)?;
        apply_masks(mel, &masks)
    }
}

/// Fills every masked cell with the mean of the unmasked input feature.
pub fn apply_masks(mel: &MelFeature, masks: &[Mask]) -> Result<MelFeature> {
    let (t, m) = mel.values.dims2()?;
    let fill = mel.values.mean();
    let mut out = mel.clone();
    let data = out.values.data_mut();
    for mask in masks {
        let extent = match mask.axis {
            MaskAxis::Time => t,
            MaskAxis::Freq => m,
        };
        if mask.start + mask.width > extent {
            return Err(Error::config(format!("mask {mask:?} exceeds extent {extent}")));
        }
        for i in mask.start..mask.start + mask.width {
            match mask.axis {
                MaskAxis::Time => data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = fill),
                MaskAxis::Freq => (0..t).for_each(|r| data[r * m + i] = fill),
            }
        }
    }
    Ok(out)
}
