//! The unified classifier, its single-modality variants, and the fusion
//! baselines, behind one [`Classifier`] interface.

mod audio;
mod baselines;
mod dropout;
mod uffia;

pub use audio::AudioConvEncoder;
pub use baselines::{FusionBaseline, FusionKind};
pub use dropout::{apply_modality_dropout, DropoutConfig};
pub use uffia::{UffiaModel, Variant};

use crate::distill::{Teacher, TeacherKind};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::flops::CostOp;
use crate::error::{Error, Result};
use crate::label::{Intensity, NUM_CLASSES};
use crate::numerics::{Checkpoint, Graph, ParamStore, Real, Tensor, Var};
use crate::rng::{self, Rng};

/// Which inputs a forward pass consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    A,
    V,
    AV,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::V, Mode::AV];

    pub fn uses_audio(self) -> bool {
        self != Mode::V
    }

    pub fn uses_video(self) -> bool {
        self != Mode::A
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::A => "A",
            Mode::V => "V",
            Mode::AV => "AV",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Mode::A),
            "V" => Ok(Mode::V),
            "AV" => Ok(Mode::AV),
            _ => Err(Error::Config(format!("unknown mode `{s}` (expected A, V or AV)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Uffia,
    FusionSelf,
    FusionCross,
    FusionBottleneck,
    AudioBaseline,
    VideoBaseline,
    AudioTeacher,
    VideoTeacher,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Uffia,
        ModelKind::FusionSelf,
        ModelKind::FusionCross,
        ModelKind::FusionBottleneck,
        ModelKind::AudioBaseline,
        ModelKind::VideoBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Uffia => "uffia",
            ModelKind::FusionSelf => "fusion-self",
            ModelKind::FusionCross => "fusion-cross",
            ModelKind::FusionBottleneck => "fusion-bottleneck",
            ModelKind::AudioBaseline => "audio-baseline",
            ModelKind::VideoBaseline => "video-baseline",
            ModelKind::AudioTeacher => "audio-teacher",
            ModelKind::VideoTeacher => "video-teacher",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture knobs shared by every model kind. The default is the small
/// desk profile; [`ModelConfig::canonical`] gives the full-size one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    pub patch: usize,
    /// Frame side length in pixels.
    pub image: usize,
    /// Frames sampled per clip for the unified model.
    pub frames: usize,
    /// Native frames per clip, all of which the fusion baselines consume.
    pub native_frames: usize,
    pub conv_channels: Vec<usize>,
    /// Audio tokens after time-window pooling.
    pub audio_windows: usize,
    pub head_hidden: usize,
    /// Spectral pooling factor applied before the unified model's audio encoder.
    pub simpf_k: f64,
    pub mel_frames: usize,
    pub mel_bins: usize,
    /// Side of the square mel patches used by the fusion baselines.
    pub audio_patch: usize,
    pub bottleneck_tokens: usize,
    /// Log-mel values enter the network as `(x − mean) / std`.
    pub audio_norm: [f64; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 32,
            heads: 4,
            ffn: 64,
            layers: 1,
            patch: 16,
            image: 64,
            frames: 4,
            native_frames: 16,
            conv_channels: vec![4, 8],
            audio_windows: 8,
            head_hidden: 32,
            simpf_k: 0.5,
            mel_frames: 128,
            mel_bins: 128,
            audio_patch: 16,
            bottleneck_tokens: 2,
            audio_norm: [1.0, 4.0],
        }
    }
}

impl ModelConfig {
    pub fn canonical() -> Self {
        Self {
            d: 768,
            heads: 8,
            ffn: 1024,
            layers: 6,
            patch: 16,
            image: 224,
            frames: 4,
            native_frames: 50,
            conv_channels: vec![16, 32, 64, 128],
            audio_windows: 8,
            head_hidden: 768,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return bad(format!("d={} must be a positive multiple of heads={}", self.d, self.heads));
        }
        if self.patch == 0 || self.image % self.patch != 0 {
            return bad(format!("image side {} is not a multiple of patch {}", self.image, self.patch));
        }
        if self.frames == 0 || self.frames > self.native_frames {
            return bad(format!("cannot sample {} of {} native frames", self.frames, self.native_frames));
        }
        if self.audio_patch == 0 || self.mel_frames % self.audio_patch != 0 || self.mel_bins % self.audio_patch != 0 {
            return bad(format!(
                "mel {}×{} is not a multiple of audio patch {}",
                self.mel_frames, self.mel_bins, self.audio_patch
            ));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv_channels must be non-empty and positive".into());
        }
        if self.ffn == 0 || self.head_hidden == 0 || self.audio_windows == 0 {
            return bad("ffn, head_hidden and audio_windows must be positive".into());
        }
        if !(self.audio_norm[1] > 0.0) {
            return bad("audio_norm std must be positive".into());
        }
        crate::fusion::check_bottleneck_tokens(self.bottleneck_tokens)?;
        crate::dsp::simpf::pooled_len(self.mel_frames, self.simpf_k)?;
        Ok(())
    }

    /// Frames of the spectrally pooled mel the unified model sees.
    pub fn pooled_frames(&self) -> usize {
        crate::dsp::simpf::pooled_len(self.mel_frames, self.simpf_k).unwrap_or(self.mel_frames)
    }

    pub fn patches_per_frame(&self) -> usize {
        (self.image / self.patch) * (self.image / self.patch)
    }
}

/// What a model expects from the data pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputSpec {
    /// Spectral pooling factor, if the model takes a compressed mel.
    pub simpf_k: Option<f64>,
    /// `Some(n)`: sample `n` frames; `None`: every native frame.
    pub sampled_frames: Option<usize>,
}

/// Model-ready inputs: a log-mel `[T, M]` and a frame stack `[n, 3, H, W]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelInput {
    pub audio: Option<Tensor>,
    pub video: Option<Tensor>,
}

impl ModelInput {
    pub fn audio(&self, mode: Mode) -> Result<&Tensor> {
        self.audio
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("{mode} mode needs audio input")))
    }

    pub fn video(&self, mode: Mode) -> Result<&Tensor> {
        self.video
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("{mode} mode needs video input")))
    }
}

/// Logits plus the pooled embedding they were computed from.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub logits: Var,
    pub pooled: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UffiaOutput {
    pub logits: Vec<Real>,
    pub mode: Mode,
    pub pooled: Vec<Real>,
}

/// Shape summary used for FLOPs profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputShapes {
    pub mel_frames: usize,
    pub mel_bins: usize,
    pub frames: usize,
    pub image: usize,
}

pub trait Classifier: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn config(&self) -> &ModelConfig;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn modes(&self) -> &'static [Mode];
    fn input_spec(&self) -> InputSpec;

    /// Builds the forward pass for one sample; logits are `[1, 4]`.
    fn forward(&self, g: &mut Graph, input: &ModelInput, mode: Mode) -> Result<ForwardVars>;

    /// Installs modality-dropout probabilities; a no-op for single-branch models.
    fn configure_dropout(&mut self, _cfg: &DropoutConfig) -> Result<()> {
        Ok(())
    }

    /// Mode used for a training sample.
    fn training_mode(&self, _rng: &mut Rng) -> Mode {
        self.modes()[0]
    }

    /// Per-op cost list for inputs of the given shapes.
    fn flop_profile(&self, shapes: &InputShapes, mode: Mode) -> Result<Vec<CostOp>>;

    fn check_mode(&self, mode: Mode) -> Result<()> {
        if self.modes().contains(&mode) {
            Ok(())
        } else {
            Err(Error::Contract(format!("{} does not support {mode} mode", self.kind())))
        }
    }

    fn infer(&self, input: &ModelInput, mode: Mode) -> Result<UffiaOutput> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input, mode)?;
        Ok(UffiaOutput {
            logits: g.value(out.logits).data().to_vec(),
            mode,
            pooled: g.value(out.pooled).data().to_vec(),
        })
    }

    fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "kind": self.kind(),
            "config": self.config(),
        });
        Ok(Checkpoint::new("model", meta, self.params().named_values()))
    }
}

/// Fresh model with parameters drawn from `seed`.
pub fn build_model(kind: ModelKind, cfg: &ModelConfig, seed: u64) -> Result<Box<dyn Classifier>> {
    cfg.validate()?;
    let mut r = rng::stream(seed, &[rng::label::PARAM_INIT]);
    Ok(match kind {
        ModelKind::Uffia => Box::new(UffiaModel::new(cfg, Variant::Full, &mut r)?),
        ModelKind::AudioBaseline => Box::new(UffiaModel::new(cfg, Variant::AudioOnly, &mut r)?),
        ModelKind::VideoBaseline => Box::new(UffiaModel::new(cfg, Variant::VideoOnly, &mut r)?),
        ModelKind::FusionSelf => Box::new(FusionBaseline::new(cfg, FusionKind::SelfAttention, &mut r)?),
        ModelKind::FusionCross => Box::new(FusionBaseline::new(cfg, FusionKind::Cross, &mut r)?),
        ModelKind::FusionBottleneck => Box::new(FusionBaseline::new(cfg, FusionKind::Bottleneck, &mut r)?),
        ModelKind::AudioTeacher => Box::new(Teacher::new(TeacherKind::AudioConv, cfg, &mut r)?),
        ModelKind::VideoTeacher => Box::new(Teacher::new(TeacherKind::VideoSep3d, cfg, &mut r)?),
    })
}

/// Loads a student, baseline or teacher checkpoint.
pub fn load_model(ck: &Checkpoint) -> Result<Box<dyn Classifier>> {
    if ck.tag != "teacher" {
        ck.expect_tag("model")?;
    }
    let kind: ModelKind = serde_json::from_value(ck.meta["kind"].clone())
        .map_err(|e| Error::Checkpoint(format!("model kind: {e}")))?;
    let cfg: ModelConfig = serde_json::from_value(ck.meta["config"].clone())
        .map_err(|e| Error::Checkpoint(format!("model config: {e}")))?;
    let mut model = build_model(kind, &cfg, 0)?;
    model.params_mut().load_from(&ck.tensors)?;
    Ok(model)
}

/// Argmax over the logits; ties go to the lowest class index.
pub fn predict(logits: &[Real]) -> Result<Intensity> {
    if logits.len() != NUM_CLASSES {
        return Err(Error::dim(format!("{} logits, expected {NUM_CLASSES}", logits.len())));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN logit".into()));
    }
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    Ok(Intensity::from_index(best).expect("index below NUM_CLASSES"))
}
