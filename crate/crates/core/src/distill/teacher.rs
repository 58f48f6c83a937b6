//! Frozen reference models that see the uncompressed inputs.

use crate::bench::flops::{self, CostOp};
use crate::error::{Error, Result};
use crate::fusion::Mlp;
use crate::label::NUM_CLASSES;
use crate::model::{AudioConvEncoder, Classifier, ForwardVars, InputShapes, InputSpec, Mode, ModelConfig, ModelInput, ModelKind};
use crate::numerics::graph::PoolKind;
use crate::numerics::{Checkpoint, Graph, Init, ParamId, ParamStore, Tensor, Var};
use crate::rng::Rng;

/// Frames are average-pooled by this factor before the video teacher's convolutions.
pub const VIDEO_DOWNSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TeacherKind {
    /// Conv stack over the full 128-frame mel.
    AudioConv,
    /// Separable 3-D convolutions (spatial 1×3×3, then temporal 3×1×1) over every frame.
    VideoSep3d,
}

impl TeacherKind {
    pub fn mode(self) -> Mode {
        match self {
            TeacherKind::AudioConv => Mode::A,
            TeacherKind::VideoSep3d => Mode::V,
        }
    }
}

#[derive(Clone, Debug)]
struct Sep3dBlock {
    spatial: (ParamId, ParamId),
    temporal: (ParamId, ParamId),
    c_in: usize,
    c_out: usize,
}

#[derive(Clone, Debug)]
enum Body {
    Audio(AudioConvEncoder),
    Video(Vec<Sep3dBlock>),
}

#[derive(Clone, Debug)]
pub struct Teacher {
    kind: TeacherKind,
    cfg: ModelConfig,
    ps: ParamStore,
    body: Body,
    head: Mlp,
}

fn conv_param(ps: &mut ParamStore, name: &str, shape: [usize; 5], rng: &mut Rng) -> Result<(ParamId, ParamId)> {
    let vol = shape[2] * shape[3] * shape[4];
    let w = ps.init(
        format!("{name}.w"),
        &shape,
        Init::XavierUniform { fan_in: shape[1] * vol, fan_out: shape[0] * vol },
        rng,
    )?;
    let b = ps.init(format!("{name}.b"), &[shape[0]], Init::Zeros, rng)?;
    Ok((w, b))
}

impl Teacher {
    pub fn new(kind: TeacherKind, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new();
        let channels: Vec<usize> = cfg.conv_channels.iter().map(|c| 2 * c).collect();
        let (body, width) = match kind {
            TeacherKind::AudioConv => (
                Body::Audio(AudioConvEncoder::new(&mut ps, "teacher.audio", &channels, cfg.audio_windows, cfg.d, cfg.audio_norm, rng)?),
                cfg.d,
            ),
            TeacherKind::VideoSep3d => {
                let mut blocks = Vec::new();
                let mut c_in = 3;
                for (i, &c_out) in channels.iter().enumerate() {
                    blocks.push(Sep3dBlock {
                        spatial: conv_param(&mut ps, &format!("teacher.video{i}.spatial"), [c_out, c_in, 1, 3, 3], rng)?,
                        temporal: conv_param(&mut ps, &format!("teacher.video{i}.temporal"), [c_out, c_out, 3, 1, 1], rng)?,
                        c_in,
                        c_out,
                    });
                    c_in = c_out;
                }
                (Body::Video(blocks), c_in)
            }
        };
        let head = Mlp::new(&mut ps, "teacher.head", width, cfg.head_hidden, NUM_CLASSES, rng)?;
        Ok(Self { kind, cfg: cfg.clone(), ps, body, head })
    }

    pub fn teacher_kind(&self) -> TeacherKind {
        self.kind
    }

    /// Frozen copy: every parameter marked non-trainable.
    pub fn frozen(mut self) -> Self {
        self.ps.freeze();
        self
    }

    /// Logits `[1, 4]` for one clip, computed outside any training graph.
    pub fn logits(&self, input: &ModelInput) -> Result<Tensor> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input, self.kind.mode())?;
        Ok(g.value(out.logits).clone())
    }

    fn video_features(&self, g: &mut Graph, blocks: &[Sep3dBlock], frames: &Tensor) -> Result<Var> {
        let s = frames.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::dim(format!("expected [n, 3, H, W] frames, got {s:?}")));
        }
        let (n, h, w) = (s[0], s[2], s[3]);
        // [n, 3, H, W] → [3, n, H, W]
        let plane = h * w;
        let mut data = vec![0.0; frames.len()];
        for f in 0..n {
            for c in 0..3 {
                let src = &frames.data()[(f * 3 + c) * plane..(f * 3 + c + 1) * plane];
                data[(c * n + f) * plane..(c * n + f + 1) * plane].copy_from_slice(src);
            }
        }
        let mut x = g.input(Tensor::new([3, n, h, w], data)?);
        x = g.pool3d(x, [1, VIDEO_DOWNSAMPLE, VIDEO_DOWNSAMPLE], PoolKind::Avg)?;
        for (i, b) in blocks.iter().enumerate() {
            let (sw, sb) = (g.param(&self.ps, b.spatial.0), g.param(&self.ps, b.spatial.1));
            x = g.conv3d(x, sw, sb, [0, 1, 1])?;
            x = g.relu(x);
            let (tw, tb) = (g.param(&self.ps, b.temporal.0), g.param(&self.ps, b.temporal.1));
            x = g.conv3d(x, tw, tb, [1, 0, 0])?;
            x = g.relu(x);
            if i + 1 < blocks.len() && g.shape(x)[2] >= 2 && g.shape(x)[3] >= 2 {
                x = g.pool3d(x, [1, 2, 2], PoolKind::Max)?;
            }
        }
        let c = g.shape(x)[0];
        let rest: usize = g.shape(x)[1..].iter().product();
        let x = g.reshape(x, &[c, rest])?;
        let x = g.mean_last(x)?;
        g.reshape(x, &[1, c])
    }
}

impl Classifier for Teacher {
    fn kind(&self) -> ModelKind {
        match self.kind {
            TeacherKind::AudioConv => ModelKind::AudioTeacher,
            TeacherKind::VideoSep3d => ModelKind::VideoTeacher,
        }
    }

    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn params(&self) -> &ParamStore {
        &self.ps
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.ps
    }

    fn modes(&self) -> &'static [Mode] {
        match self.kind {
            TeacherKind::AudioConv => &[Mode::A],
            TeacherKind::VideoSep3d => &[Mode::V],
        }
    }

    fn input_spec(&self) -> InputSpec {
        InputSpec { simpf_k: None, sampled_frames: None }
    }

    fn forward(&self, g: &mut Graph, input: &ModelInput, mode: Mode) -> Result<ForwardVars> {
        self.check_mode(mode)?;
        let pooled = match &self.body {
            Body::Audio(enc) => {
                let mel = input.audio(mode)?;
                if mel.shape()[0] != self.cfg.mel_frames {
                    return Err(Error::Contract(format!(
                        "audio teacher needs the full {}-frame mel, got {} frames",
                        self.cfg.mel_frames,
                        mel.shape()[0]
                    )));
                }
                let tokens = enc.forward(g, &self.ps, mel)?;
                g.mean_rows(tokens)?
            }
            Body::Video(blocks) => {
                let frames = input.video(mode)?;
                if frames.shape()[0] != self.cfg.native_frames {
                    return Err(Error::Contract(format!(
                        "video teacher needs all {} native frames, got {}",
                        self.cfg.native_frames,
                        frames.shape()[0]
                    )));
                }
                self.video_features(g, blocks, frames)?
            }
        };
        let logits = self.head.forward(g, &self.ps, pooled)?;
        Ok(ForwardVars { logits, pooled })
    }

    fn flop_profile(&self, shapes: &InputShapes, mode: Mode) -> Result<Vec<CostOp>> {
        self.check_mode(mode)?;
        let mut ops = match &self.body {
            Body::Audio(enc) => {
                let mut ops = enc.flop_profile(shapes.mel_frames, shapes.mel_bins, self.cfg.d);
                ops.push(CostOp::Elementwise { elems: self.cfg.audio_windows * self.cfg.d });
                ops
            }
            Body::Video(blocks) => {
                let (n, mut side) = (shapes.frames, shapes.image);
                let mut ops = vec![CostOp::Elementwise { elems: 3 * n * side * side }];
                side /= VIDEO_DOWNSAMPLE;
                for (i, b) in blocks.iter().enumerate() {
                    let pos = n * side * side;
                    ops.push(CostOp::Conv { positions: pos, c_in: b.c_in, c_out: b.c_out, kernel: 9 });
                    ops.push(CostOp::Elementwise { elems: pos * b.c_out });
                    ops.push(CostOp::Conv { positions: pos, c_in: b.c_out, c_out: b.c_out, kernel: 3 });
                    ops.push(CostOp::Elementwise { elems: pos * b.c_out });
                    if i + 1 < blocks.len() && side >= 2 {
                        ops.push(CostOp::Elementwise { elems: pos * b.c_out });
                        side /= 2;
                    }
                }
                let c = blocks.last().map_or(3, |b| b.c_out);
                ops.push(CostOp::Elementwise { elems: n * side * side * c });
                ops
            }
        };
        let width = match &self.body {
            Body::Audio(_) => self.cfg.d,
            Body::Video(blocks) => blocks.last().map_or(3, |b| b.c_out),
        };
        ops.extend(flops::mlp(1, width, self.cfg.head_hidden, NUM_CLASSES));
        Ok(ops)
    }

    fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({ "kind": self.kind(), "config": self.config() });
        Ok(Checkpoint::new("teacher", meta, self.params().named_values()))
    }
}
