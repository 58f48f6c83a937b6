//! Minibatch training with per-sample graphs and an ordered gradient reduction.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bench::eval::{evaluate, Corruption};
use crate::bench::inputs::{audio_tensor, clip_shapes, video_tensor};
use crate::config::OptimConfig;
use crate::data::{Dataset, Example, Split};
use crate::distill::{kd_loss, KdConfig};
use crate::dsp::SpecAugment;
use crate::error::{Error, Result};
use crate::label::Intensity;
use crate::model::{predict, Classifier, Mode, ModelInput};
use crate::numerics::{AdamState, Graph, ParamGrads, Real, Tensor};
use crate::parallel;
use crate::rng::{self, label};

/// One training sample as fed to [`train_step`].
#[derive(Clone, Debug)]
pub struct BatchItem {
    pub input: ModelInput,
    pub label: Intensity,
    pub mode: Mode,
    /// Full-resolution inputs for a teacher, when distilling.
    pub teacher_input: Option<ModelInput>,
    pub teacher_logits: Option<Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Mean loss over the batch.
    pub loss: Real,
    /// Samples whose pre-update prediction was right.
    pub correct: usize,
}

struct SampleResult {
    loss: Real,
    correct: bool,
    grads: ParamGrads,
}

fn sample_grads(model: &dyn Classifier, item: &BatchItem, kd: Option<&KdConfig>) -> Result<SampleResult> {
    let mut g = Graph::new();
    let out = model.forward(&mut g, &item.input, item.mode)?;
    let y = [item.label.index()];
    let loss = match (kd, &item.teacher_logits) {
        (Some(cfg), Some(t)) => kd_loss(&mut g, out.logits, t, &y, cfg)?,
        (Some(_), None) => return Err(Error::contract("distillation step without teacher logits")),
        (None, _) => g.cross_entropy(out.logits, &y)?,
    };
    let value = g.value(loss).data()[0];
    let correct = predict(g.value(out.logits).data()).map(|p| p == item.label).unwrap_or(false);
    let grads = g.backward(loss)?.param_grads(&g, model.params());
    Ok(SampleResult { loss: value, correct, grads })
}

/// Forward and backward every item in parallel, sum the gradients in batch
/// order, and apply one Adam update on the batch mean. A non-finite loss
/// aborts before any parameter changes.
pub fn train_step(model: &mut dyn Classifier, adam: &mut AdamState, batch: &[BatchItem], kd: Option<&KdConfig>) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let frozen: &dyn Classifier = model;
    let results = parallel::map_slice(batch, |item| sample_grads(frozen, item, kd))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let loss = results.iter().map(|r| r.loss).sum::<Real>() / batch.len() as Real;
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, step: 0, loss: loss as f64 });
    }
    let mut total = ParamGrads::empty(model.params().len());
    for r in &results {
        total.merge(&r.grads);
    }
    total.scale(1.0 / batch.len() as Real);
    let store = model.params_mut();
    store.zero_grad();
    store.accumulate(&total)?;
    adam.step(store)?;
    Ok(StepStats { loss, correct: results.iter().filter(|r| r.correct).count() })
}

/// What the loop needs beyond the model and data.
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub optim: OptimConfig,
    pub augment: SpecAugment,
    pub seed: u64,
    /// Train every sample in this mode instead of the model's own draw.
    pub fixed_mode: Option<Mode>,
    /// Modes validated after each epoch; their mean accuracy selects the checkpoint.
    pub val_modes: Vec<Mode>,
    /// Distillation loss and one teacher-logit row per training example.
    pub kd: Option<(KdConfig, Vec<Tensor>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val: Vec<TestRecord>,
    /// Mean validation accuracy over the validated modes.
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub mode: Mode,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test: Vec<TestRecord>,
    pub wall_clock_secs: f64,
    pub params: usize,
    pub flops: Option<u64>,
    pub flops_mode: Option<Mode>,
}

impl MetricsLog {
    pub fn test_accuracy(&self, mode: Mode) -> Option<f64> {
        self.test.iter().find(|t| t.mode == mode).map(|t| t.accuracy)
    }
}

fn batch_item(model: &dyn Classifier, ex: &Example, opts: &FitOptions, mode: Mode, step_seed: &[u64]) -> Result<BatchItem> {
    let spec = model.input_spec();
    let mut r = rng::stream(opts.seed, step_seed);
    let audio = if mode.uses_audio() { Some(audio_tensor(&ex.mel, &spec, Some((&opts.augment, &mut r)))?) } else { None };
    let video = if mode.uses_video() { Some(video_tensor(&ex.video, &spec, Some(&mut r), None)?) } else { None };
    Ok(BatchItem { input: ModelInput { audio, video }, label: ex.label, mode, teacher_input: None, teacher_logits: None })
}

/// Trains `model` on the train split, keeping the parameters of the epoch
/// with the best validation accuracy (ties keep the earlier epoch), and
/// reports test accuracy in every mode the model supports.
pub fn fit(model: &mut dyn Classifier, ds: &Dataset, opts: &FitOptions) -> Result<MetricsLog> {
    let start = Instant::now();
    let train: Vec<&Example> = ds.split(Split::Train);
    let val: Vec<&Example> = ds.split(Split::Val);
    let test: Vec<&Example> = ds.split(Split::Test);
    if train.is_empty() {
        return Err(Error::input("training split is empty"));
    }
    if let Some((_, t)) = &opts.kd {
        if t.len() != train.len() {
            return Err(Error::contract(format!("{} teacher logit rows for {} training examples", t.len(), train.len())));
        }
    }
    if let Some(m) = opts.fixed_mode {
        model.check_mode(m)?;
    }
    if opts.val_modes.is_empty() {
        return Err(Error::config("no validation mode"));
    }
    for &m in &opts.val_modes {
        model.check_mode(m)?;
    }
    let mut adam = AdamState::new(opts.optim.lr as Real);
    let mut log = MetricsLog { params: model.params().trainable_count(), ..MetricsLog::default() };
    let mut best: Option<(f64, Vec<(String, Tensor)>)> = None;
    let clean = Corruption::default();
    for epoch in 1..=opts.optim.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(opts.seed, &[label::SHUFFLE, epoch as u64]));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (step, chunk) in order.chunks(opts.optim.batch_size).enumerate() {
            let frozen: &dyn Classifier = model;
            let mut batch = parallel::map_slice(chunk, |&i| {
                let path = [label::TRAIN_STEP, epoch as u64, i as u64];
                let mode = match opts.fixed_mode {
                    Some(m) => m,
                    None => frozen.training_mode(&mut rng::stream(opts.seed, &[label::TRAIN_STEP, epoch as u64, i as u64, 0])),
                };
                batch_item(frozen, train[i], opts, mode, &path)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            if let Some((_, logits)) = &opts.kd {
                for (item, &i) in batch.iter_mut().zip(chunk) {
                    item.teacher_logits = Some(logits[i].clone());
                }
            }
            let stats = train_step(model, &mut adam, &batch, opts.kd.as_ref().map(|(c, _)| c)).map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence { epoch, step, loss },
                e => e,
            })?;
            loss_sum += stats.loss as f64 * chunk.len() as f64;
            correct += stats.correct;
        }
        let mut v = Vec::new();
        if !val.is_empty() {
            for &mode in &opts.val_modes {
                let r = evaluate(model, ds, &val, mode, &clean, opts.seed)?;
                v.push(TestRecord { mode, loss: r.loss, accuracy: r.accuracy() });
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy: v.iter().map(|r| r.accuracy).sum::<f64>() / v.len().max(1) as f64,
            val: v,
        };
        // Without a validation split the last epoch wins.
        let score = if val.is_empty() { epoch as f64 } else { record.val_accuracy };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params().named_values()));
            log.best_epoch = epoch;
        }
        log.epochs.push(record);
    }
    if let Some((_, params)) = best {
        model.params_mut().load_from(&params)?;
    }
    if !test.is_empty() {
        for &mode in model.modes() {
            let r = evaluate(model, ds, &test, mode, &clean, opts.seed)?;
            log.test.push(TestRecord { mode, loss: r.loss, accuracy: r.accuracy() });
        }
    }
    let mode = opts.val_modes[0];
    let shapes = clip_shapes(model.config(), &model.input_spec());
    log.flops = model.flop_profile(&shapes, mode).ok().and_then(|ops| crate::bench::flops::count_flops(&ops).ok());
    log.flops_mode = Some(mode);
    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(log)
}
