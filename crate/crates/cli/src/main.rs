//! `uffia`: synthesis, preprocessing, training, distillation, evaluation,
//! noise sweeps and FLOPs reports from one binary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uffia_core::bench::run;
use uffia_core::config::{DistillConfig, RunConfig, DATA_ROOT_ENV};
use uffia_core::data::{export_synthetic, make_splits, preprocess_manifest, scan_class_folders, write_manifest, SynthConfig};
use uffia_core::model::Mode;
use uffia_core::{parallel, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "uffia", version, about = "Unified audio-visual feeding-intensity classifier")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `optim.epochs=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory [default: runs/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives the deterministic verification mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (WAV + packed frames + manifest).
    Synth,
    /// Build a manifest from class-named folders.
    Manifest {
        /// Dataset root with None/, Weak/, Medium/, Strong/ folders [default: $UFFIA_DATA_ROOT].
        #[arg(long)]
        root: Option<PathBuf>,
        /// Train, val and test fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.1, 0.2])]
        fractions: Vec<f64>,
    },
    /// Cache log-mel features for every clip of the configured manifest.
    Preprocess,
    /// Train the configured model.
    Train,
    /// Distil a teacher into an A- or V-mode student.
    Distill,
    /// Test-split accuracy of a checkpoint.
    Eval(CheckpointArgs),
    /// Test-split accuracy across the configured SNRs.
    Sweep(CheckpointArgs),
    /// Parameter and FLOPs counts for every model kind.
    Flops,
}

#[derive(Args, Debug)]
struct CheckpointArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A, V or AV [default: AV when supported].
    #[arg(long)]
    mode: Option<Mode>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Manifest { .. } => "manifest",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Distill => "distill",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Flops => "flops",
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let base = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&c.set)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn synth_config(cfg: &RunConfig) -> SynthConfig {
    match &cfg.data {
        uffia_core::config::DataConfig::Synthetic(s) => s.clone(),
        _ => SynthConfig::default(),
    }
}

fn execute(cmd: &Command, cfg: &RunConfig, out: &Path) -> Result<String> {
    Ok(match cmd {
        Command::Synth => {
            let stubs = export_synthetic(&synth_config(cfg), cfg.seed, out)?;
            format!("wrote {} clips and {}", stubs.len(), out.join("manifest.csv").display())
        }
        Command::Manifest { root, fractions } => {
            let root = match root {
                Some(r) => r.clone(),
                None => std::env::var_os(DATA_ROOT_ENV)
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config(format!("--root is unset and {DATA_ROOT_ENV} is not defined")))?,
            };
            let &[train, val, test] = fractions.as_slice() else {
                return Err(Error::Config(format!("--fractions needs three values, got {}", fractions.len())));
            };
            let mut stubs = scan_class_folders(&root)?;
            let labels: Vec<_> = stubs.iter().map(|s| s.label).collect();
            let splits = make_splits(&labels, [train, val, test], cfg.seed)?;
            stubs.iter_mut().zip(splits).for_each(|(s, sp)| s.split = sp);
            let path = root.join("manifest.csv");
            write_manifest(&path, &stubs)?;
            format!("wrote {} rows to {}", stubs.len(), path.display())
        }
        Command::Preprocess => {
            let manifest = cfg
                .data
                .manifest_path()?
                .ok_or_else(|| Error::Config("preprocess needs data.source = \"manifest\"".into()))?;
            let n = preprocess_manifest(&manifest, &cfg.mel, out)?;
            format!("cached {n} mel features in {}", out.display())
        }
        Command::Train => {
            let ds = run::load_dataset(cfg)?;
            let r = run::train(cfg, &ds, Some(out))?;
            format!("best epoch {}, test {:?}; outputs in {}", r.log.best_epoch, summary(&r.log), out.display())
        }
        Command::Distill => {
            let mut cfg = cfg.clone();
            cfg.distill.get_or_insert_with(DistillConfig::default);
            let ds = run::load_dataset(&cfg)?;
            let r = run::distill(&cfg, &ds, Some(out))?;
            format!("student test {:?}; outputs in {}", summary(&r.student.log), out.display())
        }
        Command::Eval(a) => {
            let ds = run::load_dataset(cfg)?;
            let r = run::eval_checkpoint(cfg, &ds, &a.checkpoint, a.mode, Some(out))?;
            format!("accuracy {:.4} ({}/{})", r.accuracy(), r.correct, r.total)
        }
        Command::Sweep(a) => {
            let ds = run::load_dataset(cfg)?;
            let rows = run::sweep_checkpoint(cfg, &ds, &a.checkpoint, a.mode, Some(out))?;
            rows.iter().map(|r| format!("{:>6} dB  {:.4}", r.snr_db, r.accuracy)).collect::<Vec<_>>().join("\n")
        }
        Command::Flops => {
            let rows = run::flops_report(cfg, Some(out))?;
            rows.iter()
                .map(|r| format!("{:<18} {:<3} params {:>10}  flops {:>14}", r.model, r.mode, r.params, r.flops))
                .collect::<Vec<_>>()
                .join("\n")
        }
    })
}

fn summary(log: &uffia_core::bench::MetricsLog) -> Vec<String> {
    log.test.iter().map(|t| format!("{}={:.3}", t.mode, t.accuracy)).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.common).and_then(|cfg| {
        let out = run::out_dir(cli.common.out.clone(), cli.command.name());
        let work = || execute(&cli.command, &cfg, &out);
        match cli.common.threads {
            Some(n) => parallel::with_threads(n, work),
            None => work(),
        }
    });
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
