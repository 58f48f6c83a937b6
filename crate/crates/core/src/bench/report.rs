//! CSV and JSON artefacts of a run.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::bench::eval::SweepRow;
use crate::bench::flops::CONVENTION;
use crate::bench::train::MetricsLog;
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const METRICS_CSV: &str = "metrics.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const RUN_JSON: &str = "run.json";
pub const FLOPS_CSV: &str = "flops.csv";

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// One row per epoch and split: `epoch,split,mode,loss,accuracy`.
pub fn write_metrics_csv(path: &Path, log: &MetricsLog) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "split", "mode", "loss", "accuracy"])?;
    for e in &log.epochs {
        let ep = e.epoch.to_string();
        w.write_record([ep.as_str(), "train", "", &fmt(e.train_loss), &fmt(e.train_accuracy)])?;
        for v in &e.val {
            w.write_record([ep.as_str(), "val", &v.mode.to_string(), &fmt(v.loss), &fmt(v.accuracy)])?;
        }
    }
    let best = log.best_epoch.to_string();
    for t in &log.test {
        w.write_record([best.as_str(), "test", &t.mode.to_string(), &fmt(t.loss), &fmt(t.accuracy)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["snr_db", "accuracy"])?;
    for r in rows {
        w.write_record([format!("{}", r.snr_db), format!("{}", r.accuracy)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlopsRow {
    pub model: String,
    pub mode: String,
    pub params: usize,
    pub flops: u64,
}

/// FLOPs table preceded by a `#` line stating the counting convention.
pub fn write_flops_csv(path: &Path, rows: &[FlopsRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    let mut text = format!("# {CONVENTION}\n").into_bytes();
    text.extend(body);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Build and host facts that may explain differences between runs.
pub fn environment() -> serde_json::Value {
    serde_json::json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "precision": if cfg!(feature = "single-precision") { "f32" } else { "f64" },
        "parallel": cfg!(feature = "parallel"),
        "threads": crate::parallel::current_threads(),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "flops_convention": CONVENTION,
    })
}

/// `run.json`: the full config, the environment, and whatever results the
/// command produced.
pub fn write_run_json(path: &Path, cfg: &RunConfig, command: &str, results: serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let doc = serde_json::json!({
        "command": command,
        "config": cfg,
        "environment": environment(),
        "results": results,
    });
    fs::write(path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(path, e))
}

/// Reads the config echoed into a `run.json`.
pub fn config_from_run_json(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    serde_json::from_value(doc["config"].clone()).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}
