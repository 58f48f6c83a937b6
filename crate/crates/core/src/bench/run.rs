//! End-to-end commands: each loads data, does its work and writes its
//! artefacts under an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::bench::eval::{evaluate, noise_sweep, Corruption, EvalResult, SweepRow};
use crate::bench::flops::count_flops;
use crate::bench::inputs::{clean_input, clip_shapes};
use crate::bench::report::{self, FlopsRow, FLOPS_CSV, METRICS_CSV, RUN_JSON, SWEEP_CSV};
use crate::bench::train::{fit, FitOptions, MetricsLog};
use crate::config::{DataConfig, RunConfig};
use crate::data::{Dataset, Example, Split};
use crate::distill::{check_pairing, teacher_logits, teacher_mode};
use crate::dsp::NoiseSpec;
use crate::error::{Error, Result};
use crate::model::{build_model, load_model, Classifier, Mode, ModelConfig, ModelKind};
use crate::numerics::{Checkpoint, Tensor};
use crate::parallel;

pub const MODEL_CKPT: &str = "model.ckpt";
pub const TEACHER_CKPT: &str = "teacher.ckpt";

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataConfig::Synthetic(s) => Dataset::synthetic(s, &cfg.mel, cfg.seed),
        DataConfig::Manifest { cache, .. } => {
            let path = cfg.data.manifest_path()?.expect("manifest source");
            Dataset::from_manifest(&path, &cfg.mel, cfg.arch.image, cache.as_deref())
        }
    }
}

/// A fresh model of `kind` with the run's dropout installed.
pub fn build(cfg: &RunConfig, kind: ModelKind) -> Result<Box<dyn Classifier>> {
    let mut m = build_model(kind, &cfg.arch, cfg.seed)?;
    m.configure_dropout(&cfg.dropout)?;
    Ok(m)
}

/// AV when supported, otherwise the model's only mode.
pub fn primary_mode(model: &dyn Classifier) -> Mode {
    if model.modes().contains(&Mode::AV) {
        Mode::AV
    } else {
        model.modes()[0]
    }
}

fn fit_options(cfg: &RunConfig, model: &dyn Classifier) -> FitOptions {
    FitOptions {
        optim: cfg.optim.clone(),
        augment: cfg.augment.clone(),
        seed: cfg.seed,
        fixed_mode: None,
        val_modes: model.modes().to_vec(),
        kd: None,
    }
}

fn save_model(model: &dyn Classifier, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.to_checkpoint()?.write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Box<dyn Classifier>> {
    load_model(&Checkpoint::read(path)?)
}

pub struct TrainOutcome {
    pub model: Box<dyn Classifier>,
    pub log: MetricsLog,
}

fn persist(out: Option<&Path>, cfg: &RunConfig, command: &str, model: &dyn Classifier, log: &MetricsLog, extra: serde_json::Value) -> Result<()> {
    let Some(out) = out else { return Ok(()) };
    save_model(model, &out.join(MODEL_CKPT))?;
    report::write_metrics_csv(&out.join(METRICS_CSV), log)?;
    report::write_run_json(&out.join(RUN_JSON), cfg, command, json!({ "metrics": log, "extra": extra }))
}

/// Trains `cfg.model` on `ds`; with `out`, writes the best checkpoint,
/// `metrics.csv` and `run.json` there.
pub fn train(cfg: &RunConfig, ds: &Dataset, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = build(cfg, cfg.model)?;
    let opts = fit_options(cfg, model.as_ref());
    let log = fit(model.as_mut(), ds, &opts)?;
    persist(out, cfg, "train", model.as_ref(), &log, json!(null))?;
    Ok(TrainOutcome { model, log })
}

/// Trains the teacher for `mode` on full-resolution inputs and freezes it.
pub fn fit_teacher(cfg: &RunConfig, ds: &Dataset, mode: Mode, epochs: usize) -> Result<TrainOutcome> {
    let kind = match mode {
        Mode::A => ModelKind::AudioTeacher,
        Mode::V => ModelKind::VideoTeacher,
        Mode::AV => return Err(Error::config("no teacher distils into AV mode")),
    };
    let mut model = build(cfg, kind)?;
    let mut opts = fit_options(cfg, model.as_ref());
    opts.optim.epochs = epochs.max(1);
    let log = fit(model.as_mut(), ds, &opts)?;
    model.params_mut().freeze();
    Ok(TrainOutcome { model, log })
}

pub struct DistillOutcome {
    pub student: TrainOutcome,
    pub teacher: Box<dyn Classifier>,
    pub teacher_log: Option<MetricsLog>,
}

/// Teacher logits for every example of `examples`, in order.
pub fn teacher_logit_table(teacher: &dyn Classifier, examples: &[&Example]) -> Result<Vec<Tensor>> {
    let mode = teacher_mode(teacher.kind()).ok_or_else(|| Error::config(format!("{} is not a teacher", teacher.kind())))?;
    let spec = teacher.input_spec();
    parallel::map_slice(examples, |ex| teacher_logits(teacher, &clean_input(ex, &spec, mode)?))
        .into_iter()
        .collect()
}

/// Distils a teacher into a single-mode student. The teacher is loaded from
/// `distill.teacher_checkpoint` or trained first.
pub fn distill(cfg: &RunConfig, ds: &Dataset, out: Option<&Path>) -> Result<DistillOutcome> {
    cfg.validate()?;
    let dcfg = cfg.distill.clone().ok_or_else(|| Error::config("distill section is missing"))?;
    let (mut teacher, teacher_log) = match &dcfg.teacher_checkpoint {
        Some(p) => (load_checkpoint(p)?, None),
        None => {
            let t = fit_teacher(cfg, ds, dcfg.mode, dcfg.teacher_epochs)?;
            (t.model, Some(t.log))
        }
    };
    teacher.params_mut().freeze();
    check_pairing(teacher.kind(), dcfg.mode)?;
    let mut student = build(cfg, cfg.model)?;
    student.check_mode(dcfg.mode)?;
    let train: Vec<&Example> = ds.split(Split::Train);
    let table = teacher_logit_table(teacher.as_ref(), &train)?;
    let mut opts = fit_options(cfg, student.as_ref());
    opts.fixed_mode = Some(dcfg.mode);
    opts.val_modes = vec![dcfg.mode];
    opts.kd = Some((dcfg.loss.clone(), table));
    let log = fit(student.as_mut(), ds, &opts)?;
    if let Some(out) = out {
        save_model(teacher.as_ref(), &out.join(TEACHER_CKPT))?;
    }
    persist(out, cfg, "distill", student.as_ref(), &log, json!({ "teacher": teacher_log }))?;
    Ok(DistillOutcome { student: TrainOutcome { model: student, log }, teacher, teacher_log })
}

fn split_refs(ds: &Dataset, split: Split) -> Result<Vec<&Example>> {
    let v = ds.split(split);
    if v.is_empty() {
        return Err(Error::input(format!("the {split} split is empty")));
    }
    Ok(v)
}

/// Test-split accuracy of a checkpoint under the configured corruption.
pub fn eval_checkpoint(cfg: &RunConfig, ds: &Dataset, ckpt: &Path, mode: Option<Mode>, out: Option<&Path>) -> Result<EvalResult> {
    let model = load_checkpoint(ckpt)?;
    let mode = mode.unwrap_or_else(|| primary_mode(model.as_ref()));
    let c = Corruption {
        audio: cfg.corruption.eval_snr.map(|s| NoiseSpec::new(cfg.corruption.noise, s)),
        visual: cfg.corruption.visual,
    };
    let r = evaluate(model.as_ref(), ds, &split_refs(ds, Split::Test)?, mode, &c, cfg.seed)?;
    if let Some(out) = out {
        let res = json!({ "checkpoint": ckpt, "mode": mode, "correct": r.correct, "total": r.total, "accuracy": r.accuracy() });
        report::write_run_json(&out.join(RUN_JSON), cfg, "eval", res)?;
    }
    Ok(r)
}

/// Test-split noise sweep of a checkpoint over `corruption.snrs`.
pub fn sweep_checkpoint(cfg: &RunConfig, ds: &Dataset, ckpt: &Path, mode: Option<Mode>, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    let model = load_checkpoint(ckpt)?;
    let mode = mode.unwrap_or_else(|| primary_mode(model.as_ref()));
    let c = &cfg.corruption;
    let rows = noise_sweep(model.as_ref(), ds, &split_refs(ds, Split::Test)?, mode, c.noise, &c.snrs, c.visual, cfg.seed)?;
    if let Some(out) = out {
        report::write_sweep_csv(&out.join(SWEEP_CSV), &rows)?;
        let res = json!({ "checkpoint": ckpt, "mode": mode, "rows": rows });
        report::write_run_json(&out.join(RUN_JSON), cfg, "sweep", res)?;
    }
    Ok(rows)
}

/// Parameter and FLOPs counts of every model kind in every supported mode
/// for one clip of the configured shapes.
pub fn flops_table(arch: &ModelConfig) -> Result<Vec<FlopsRow>> {
    let mut rows = Vec::new();
    for kind in ModelKind::ALL.into_iter().chain([ModelKind::AudioTeacher, ModelKind::VideoTeacher]) {
        let m = build_model(kind, arch, 0)?;
        let shapes = clip_shapes(arch, &m.input_spec());
        for &mode in m.modes() {
            rows.push(FlopsRow {
                model: kind.to_string(),
                mode: mode.to_string(),
                params: m.params().trainable_count(),
                flops: count_flops(&m.flop_profile(&shapes, mode)?)?,
            });
        }
    }
    Ok(rows)
}

pub fn flops_report(cfg: &RunConfig, out: Option<&Path>) -> Result<Vec<FlopsRow>> {
    cfg.arch.validate()?;
    let rows = flops_table(&cfg.arch)?;
    if let Some(out) = out {
        report::write_flops_csv(&out.join(FLOPS_CSV), &rows)?;
        report::write_run_json(&out.join(RUN_JSON), cfg, "flops", json!({ "rows": rows }))?;
    }
    Ok(rows)
}

/// Output directory for a command, `runs/<command>` when unset.
pub fn out_dir(out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("runs").join(command))
}
