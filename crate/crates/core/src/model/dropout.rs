use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mode, ModelInput};
use crate::numerics::Tensor;
use crate::rng::Rng;

/// Absolute probabilities of training on both modalities, audio only, or
/// video only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutConfig {
    pub p_av: f64,
    pub p_a: f64,
    pub p_v: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self { p_av: 0.5, p_a: 0.25, p_v: 0.25 }
    }
}

impl DropoutConfig {
    pub fn new(p_av: f64, p_a: f64, p_v: f64) -> Result<Self> {
        let c = Self { p_av, p_a, p_v };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_av, self.p_a, self.p_v];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config(format!("dropout probabilities {ps:?} must lie in [0, 1]")));
        }
        if (ps.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("dropout probabilities {ps:?} must sum to 1")));
        }
        Ok(())
    }

    /// One uniform draw, split into `[0, p_av)`, `[p_av, p_av + p_a)` and the rest.
    pub fn draw(&self, rng: &mut Rng) -> Mode {
        let u: f64 = rng.random();
        if u < self.p_av {
            Mode::AV
        } else if u < self.p_av + self.p_a {
            Mode::A
        } else {
            Mode::V
        }
    }
}

/// Draws a branch and replaces the dropped modality by zeros of its exact
/// shape. Both modalities must be present.
pub fn apply_modality_dropout(input: &ModelInput, cfg: &DropoutConfig, rng: &mut Rng) -> Result<(ModelInput, Mode)> {
    cfg.validate()?;
    let audio = input.audio(Mode::AV)?;
    let video = input.video(Mode::AV)?;
    let mode = cfg.draw(rng);
    let out = match mode {
        Mode::AV => input.clone(),
        Mode::A => ModelInput { audio: Some(audio.clone()), video: Some(Tensor::zeros(video.shape())?) },
        Mode::V => ModelInput { audio: Some(Tensor::zeros(audio.shape())?), video: Some(video.clone()) },
    };
    Ok((out, mode))
}
