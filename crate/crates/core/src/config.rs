//! Run configuration: one flat JSON document that fully determines a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SynthConfig;
use crate::distill::KdConfig;
use crate::dsp::{MelConfig, NoiseKind, SpecAugment};
use crate::error::{Error, Result};
use crate::model::{DropoutConfig, Mode, ModelConfig, ModelKind};
use crate::video::VisualCorruption;

/// Environment variable naming the default dataset root.
pub const DATA_ROOT_ENV: &str = "UFFIA_DATA_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 20, epochs: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionConfig {
    pub noise: NoiseKind,
    /// Audio SNRs of a noise sweep, in dB.
    pub snrs: Vec<f64>,
    /// SNR applied during plain evaluation; `null` evaluates clean audio.
    pub eval_snr: Option<f64>,
    pub visual: VisualCorruption,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            noise: NoiseKind::Bubble,
            snrs: vec![-10.0, -5.0, 0.0, 10.0, 20.0],
            eval_snr: None,
            visual: VisualCorruption::default(),
        }
    }
}

/// Where examples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic(SynthConfig),
    Manifest {
        /// Defaults to `$UFFIA_DATA_ROOT/manifest.csv`.
        #[serde(default)]
        path: Option<PathBuf>,
        /// Directory of cached mel features.
        #[serde(default)]
        cache: Option<PathBuf>,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SynthConfig::default())
    }
}

impl DataConfig {
    pub fn manifest_path(&self) -> Result<Option<PathBuf>> {
        match self {
            DataConfig::Synthetic(_) => Ok(None),
            DataConfig::Manifest { path: Some(p), .. } => Ok(Some(p.clone())),
            DataConfig::Manifest { path: None, .. } => match std::env::var_os(DATA_ROOT_ENV) {
                Some(root) => Ok(Some(Path::new(&root).join("manifest.csv"))),
                None => Err(Error::config(format!("data.path is unset and {DATA_ROOT_ENV} is not defined"))),
            },
        }
    }
}

/// Distillation settings: the loss knobs plus where the teacher lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    #[serde(flatten)]
    pub loss: KdConfig,
    /// Student mode; the teacher kind follows from it.
    pub mode: Mode,
    /// A trained teacher checkpoint. Without one a teacher is trained first.
    pub teacher_checkpoint: Option<PathBuf>,
    pub teacher_epochs: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { loss: KdConfig::default(), mode: Mode::A, teacher_checkpoint: None, teacher_epochs: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelKind,
    pub arch: ModelConfig,
    pub dropout: DropoutConfig,
    pub distill: Option<DistillConfig>,
    pub optim: OptimConfig,
    pub augment: SpecAugment,
    pub corruption: CorruptionConfig,
    pub mel: MelConfig,
    pub data: DataConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Uffia,
            arch: ModelConfig::default(),
            dropout: DropoutConfig::default(),
            distill: None,
            optim: OptimConfig::default(),
            augment: SpecAugment::none(),
            corruption: CorruptionConfig::default(),
            mel: MelConfig::default(),
            data: DataConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.dropout.validate()?;
        if self.optim.batch_size == 0 {
            return Err(Error::config("optim.batch_size must be at least 1"));
        }
        if self.optim.epochs == 0 {
            return Err(Error::config("optim.epochs must be at least 1"));
        }
        if !(self.optim.lr > 0.0 && self.optim.lr.is_finite()) {
            return Err(Error::config(format!("optim.lr must be positive, got {}", self.optim.lr)));
        }
        if let Some(d) = &self.distill {
            d.loss.validate()?;
            if d.mode == Mode::AV {
                return Err(Error::config("distill.mode must be A or V"));
            }
        }
        if self.mel.frames != Some(self.arch.mel_frames) || self.mel.n_mels != self.arch.mel_bins {
            return Err(Error::config(format!(
                "mel frontend gives {:?}×{} features, arch expects {}×{}",
                self.mel.frames, self.mel.n_mels, self.arch.mel_frames, self.arch.mel_bins
            )));
        }
        if let DataConfig::Synthetic(s) = &self.data {
            s.params.validate()?;
            if s.params.frames != self.arch.native_frames || s.params.image != self.arch.image {
                return Err(Error::config(format!(
                    "synthetic clips have {} frames of {}px, arch expects {} of {}px",
                    s.params.frames, s.params.image, self.arch.native_frames, self.arch.image
                )));
            }
        }
        self.corruption.visual.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Reads a config file, or the config echoed into a `run.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let echoed = doc.get("command").is_some() && doc.get("config").is_some_and(|c| c.is_object());
        let cfg = if echoed { doc["config"].clone() } else { doc };
        serde_json::from_value(cfg).map_err(|e| Error::config(format!("{}: config: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `key.path=value` overrides. Values parse as JSON when they
    /// can and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override `{o}` is not KEY=VALUE")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| Error::config(format!("after overrides: {e}")))
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("malformed key `{key}`")));
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    // Switching the variant of a tagged section drops the old variant's fields.
                    if *part == "source" && map.get("source").is_some_and(|old| *old != value) {
                        map.clear();
                    }
                    map.insert((*part).to_string(), value);
                    return Ok(());
                }
                let entry = map.entry((*part).to_string()).or_insert(Value::Null);
                if entry.is_null() {
                    *entry = Value::Object(Default::default());
                }
                entry
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(format!("`{part}` in `{key}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(format!("index {idx} out of range for `{key}` (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(format!("`{key}`: `{part}` is not inside an object"))),
        };
    }
    unreachable!("the loop returns on the last segment")
}
