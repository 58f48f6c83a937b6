//! Accuracy under optional audio noise and visual corruption.

use serde::{Deserialize, Serialize};

use crate::bench::inputs::{audio_tensor, video_tensor};
use crate::data::{Dataset, Example};
use crate::dsp::mel::MelFrontend;
use crate::dsp::{mix_at_snr, NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::label::Intensity;
use crate::model::{predict, Classifier, Mode, ModelInput};
use crate::numerics::Real;
use crate::parallel;
use crate::rng::{self, label};
use crate::video::VisualCorruption;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Corruption {
    /// Noise mixed into the waveform before the mel frontend.
    pub audio: Option<NoiseSpec>,
    pub visual: VisualCorruption,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub correct: usize,
    pub total: usize,
    /// Mean cross-entropy; NaN when the predictor has no logits.
    pub loss: f64,
}

impl EvalResult {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Fraction of `predictions` equal to `labels`.
pub fn score(labels: &[Intensity], predictions: &[Intensity]) -> Result<EvalResult> {
    if labels.is_empty() {
        return Err(Error::input("no records to evaluate"));
    }
    if labels.len() != predictions.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let correct = labels.iter().zip(predictions).filter(|(a, b)| a == b).count();
    Ok(EvalResult { correct, total: labels.len(), loss: f64::NAN })
}

/// Builds the evaluation input of example `i` under `corruption`. Noise and
/// corruption draws depend on the seed, the example's position and the
/// corruption level only.
pub fn corrupted_input(
    model: &dyn Classifier,
    ds: &Dataset,
    frontend: &MelFrontend,
    ex: &Example,
    i: usize,
    mode: Mode,
    corruption: &Corruption,
    seed: u64,
) -> Result<ModelInput> {
    let spec = model.input_spec();
    let audio = if !mode.uses_audio() {
        None
    } else {
        match corruption.audio.filter(|n| n.snr_db.is_finite()) {
            None => Some(audio_tensor(&ex.mel, &spec, None)?),
            Some(noise) => {
                let wave = ds.waveform(ex)?;
                let mut r = rng::stream(seed, &[label::NOISE, i as u64, noise.snr_db.to_bits()]);
                let noisy = mix_at_snr(&wave, &noise, &mut r)?;
                Some(audio_tensor(&frontend.compute(&noisy)?, &spec, None)?)
            }
        }
    };
    let video = if !mode.uses_video() {
        None
    } else {
        let mut r = rng::stream(seed, &[label::EVAL, label::VISUAL, i as u64]);
        Some(video_tensor(&ex.video, &spec, None, Some((&corruption.visual, &mut r)))?)
    };
    Ok(ModelInput { audio, video })
}

/// Deterministic pass over `examples`, parallel across records.
pub fn evaluate(model: &dyn Classifier, ds: &Dataset, examples: &[&Example], mode: Mode, corruption: &Corruption, seed: u64) -> Result<EvalResult> {
    if examples.is_empty() {
        return Err(Error::input("no records to evaluate"));
    }
    model.check_mode(mode)?;
    corruption.visual.validate()?;
    let frontend = MelFrontend::new(ds.mel.clone())?;
    let outs = parallel::map_indexed(examples.len(), |i| -> Result<(Intensity, f64)> {
        let input = corrupted_input(model, ds, &frontend, examples[i], i, mode, corruption, seed)?;
        let logits = model.infer(&input, mode)?.logits;
        let pred = predict(&logits)?;
        Ok((pred, cross_entropy(&logits, examples[i].label.index())))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Intensity> = examples.iter().map(|e| e.label).collect();
    let preds: Vec<Intensity> = outs.iter().map(|o| o.0).collect();
    let mut r = score(&labels, &preds)?;
    r.loss = outs.iter().map(|o| o.1).sum::<f64>() / outs.len() as f64;
    Ok(r)
}

fn cross_entropy(logits: &[Real], y: usize) -> f64 {
    let mx = logits.iter().copied().fold(Real::NEG_INFINITY, Real::max) as f64;
    let lse = mx + logits.iter().map(|&v| (v as f64 - mx).exp()).sum::<f64>().ln();
    lse - logits[y] as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub accuracy: f64,
}

/// One evaluation per SNR with the given noise kind mixed into the audio.
pub fn noise_sweep(
    model: &dyn Classifier,
    ds: &Dataset,
    examples: &[&Example],
    mode: Mode,
    kind: NoiseKind,
    snrs: &[f64],
    visual: VisualCorruption,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(snrs.len());
    for &snr in snrs {
        if snr.is_nan() {
            return Err(Error::config("NaN SNR in sweep"));
        }
        let c = Corruption { audio: Some(NoiseSpec::new(kind, snr)), visual };
        let accuracy = evaluate(model, ds, examples, mode, &c, seed)?.accuracy();
        rows.push(SweepRow { snr_db: snr, accuracy });
    }
    Ok(rows)
}
