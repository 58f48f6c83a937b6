//! The unified audio-visual classifier.

use crate::bench::flops::{self, CostOp};
use crate::error::{Error, Result};
use crate::fusion::{learned_tokens, AvFusionBlock, Encoder, Linear, Mlp};
use crate::label::NUM_CLASSES;
use crate::model::{
    AudioConvEncoder, Classifier, DropoutConfig, ForwardVars, InputShapes, InputSpec, Mode, ModelConfig, ModelInput,
    ModelKind,
};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::Rng;
use crate::video::patchify;

/// Which branches a [`UffiaModel`] carries. The single-modality variants are
/// the audio-only and video-only baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    AudioOnly,
    VideoOnly,
}

#[derive(Clone, Debug)]
struct AudioBranch {
    encoder: AudioConvEncoder,
    pos: ParamId,
    cls: ParamId,
    head: Mlp,
}

#[derive(Clone, Debug)]
struct VideoBranch {
    proj: Linear,
    pos: ParamId,
    cls: ParamId,
    head: Mlp,
}

#[derive(Clone, Debug)]
struct FusionBranch {
    cls: ParamId,
    block: AvFusionBlock,
    head: Mlp,
}

/// Audio tokens, per-frame patch tokens, a shared encoder, and one class
/// token and head per mode (A, V, AV). In AV mode each frame first runs
/// through the audio-to-video fusion block; frame class tokens are
/// mean-pooled over time in V and AV mode.
#[derive(Clone, Debug)]
pub struct UffiaModel {
    cfg: ModelConfig,
    variant: Variant,
    ps: ParamStore,
    dropout: DropoutConfig,
    audio: Option<AudioBranch>,
    video: Option<VideoBranch>,
    fusion: Option<FusionBranch>,
    encoder: Encoder,
}

impl UffiaModel {
    pub fn new(cfg: &ModelConfig, variant: Variant, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new();
        let d = cfg.d;
        let has_audio = variant != Variant::VideoOnly;
        let has_video = variant != Variant::AudioOnly;
        let audio = if has_audio {
            Some(AudioBranch {
                encoder: AudioConvEncoder::new(&mut ps, "audio", &cfg.conv_channels, cfg.audio_windows, d, cfg.audio_norm, rng)?,
                pos: learned_tokens(&mut ps, "audio.pos", cfg.audio_windows + 1, d, rng)?,
                cls: learned_tokens(&mut ps, "cls.a", 1, d, rng)?,
                head: Mlp::new(&mut ps, "head.a", d, cfg.head_hidden, NUM_CLASSES, rng)?,
            })
        } else {
            None
        };
        let video = if has_video {
            Some(VideoBranch {
                proj: Linear::new(&mut ps, "video.proj", 3 * cfg.patch * cfg.patch, d, false, rng)?,
                pos: learned_tokens(&mut ps, "video.pos", cfg.patches_per_frame() + 1, d, rng)?,
                cls: learned_tokens(&mut ps, "cls.v", 1, d, rng)?,
                head: Mlp::new(&mut ps, "head.v", d, cfg.head_hidden, NUM_CLASSES, rng)?,
            })
        } else {
            None
        };
        let fusion = if variant == Variant::Full {
            Some(FusionBranch {
                cls: learned_tokens(&mut ps, "cls.av", 1, d, rng)?,
                block: AvFusionBlock::new(&mut ps, "av_block", d, cfg.heads, rng)?,
                head: Mlp::new(&mut ps, "head.av", d, cfg.head_hidden, NUM_CLASSES, rng)?,
            })
        } else {
            None
        };
        let encoder = Encoder::new(&mut ps, "encoder", d, cfg.heads, cfg.ffn, cfg.layers, rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            variant,
            ps,
            dropout: DropoutConfig::default(),
            audio,
            video,
            fusion,
            encoder,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dropout(&self) -> &DropoutConfig {
        &self.dropout
    }

    pub fn set_dropout(&mut self, cfg: DropoutConfig) -> Result<()> {
        cfg.validate()?;
        self.dropout = cfg;
        Ok(())
    }

    fn audio_branch(&self) -> Result<&AudioBranch> {
        self.audio.as_ref().ok_or_else(|| Error::Contract("model has no audio branch".into()))
    }

    fn video_branch(&self) -> Result<&VideoBranch> {
        self.video.as_ref().ok_or_else(|| Error::Contract("model has no video branch".into()))
    }

    /// `[A_cls; h_a] + pos`, shape `[T_a + 1, d]`.
    pub fn audio_tokens(&self, g: &mut Graph, mel: &Tensor) -> Result<Var> {
        let a = self.audio_branch()?;
        let h = a.encoder.forward(g, &self.ps, mel)?;
        let cls = g.param(&self.ps, a.cls);
        let pos = g.param(&self.ps, a.pos);
        let seq = g.concat_rows(&[cls, h])?;
        g.add(seq, pos)
    }

    /// Patch tokens of every frame, with `cls` prepended; each `[N + 1, d]`.
    pub fn frame_tokens(&self, g: &mut Graph, frames: &Tensor, cls: ParamId) -> Result<Vec<Var>> {
        let v = self.video_branch()?;
        let s = frames.shape();
        if s.len() != 4 || s[0] == 0 || s[1] != 3 || s[2] != self.cfg.image || s[3] != self.cfg.image {
            return Err(Error::dim(format!(
                "expected [n, 3, {0}, {0}] frames, got {s:?}",
                self.cfg.image
            )));
        }
        let per = frames.len() / s[0];
        let proj = g.param(&self.ps, v.proj.w);
        let pos = g.param(&self.ps, v.pos);
        let cls = g.param(&self.ps, cls);
        (0..s[0])
            .map(|i| {
                let patches = patchify(&frames.data()[i * per..(i + 1) * per], s[2], s[3], self.cfg.patch)?;
                let patches = g.input(patches);
                crate::video::embed_patches(g, patches, proj, pos, cls)
            })
            .collect()
    }

    fn pool_frames(&self, g: &mut Graph, class_rows: &[Var]) -> Result<Var> {
        let stacked = g.concat_rows(class_rows)?;
        g.mean_rows(stacked)
    }

    fn head(&self, g: &mut Graph, head: &Mlp, pooled: Var) -> Result<ForwardVars> {
        let logits = head.forward(g, &self.ps, pooled)?;
        Ok(ForwardVars { logits, pooled })
    }
}

impl Classifier for UffiaModel {
    fn configure_dropout(&mut self, cfg: &DropoutConfig) -> Result<()> {
        self.set_dropout(*cfg)
    }

    fn kind(&self) -> ModelKind {
        match self.variant {
            Variant::Full => ModelKind::Uffia,
            Variant::AudioOnly => ModelKind::AudioBaseline,
            Variant::VideoOnly => ModelKind::VideoBaseline,
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
        match self.variant {
            Variant::Full => &[Mode::AV, Mode::A, Mode::V],
            Variant::AudioOnly => &[Mode::A],
            Variant::VideoOnly => &[Mode::V],
        }
    }

    fn input_spec(&self) -> InputSpec {
        InputSpec {
            simpf_k: Some(self.cfg.simpf_k),
            sampled_frames: Some(self.cfg.frames),
        }
    }

    fn training_mode(&self, rng: &mut Rng) -> Mode {
        match self.variant {
            Variant::Full => self.dropout.draw(rng),
            _ => self.modes()[0],
        }
    }

    fn forward(&self, g: &mut Graph, input: &ModelInput, mode: Mode) -> Result<ForwardVars> {
        self.check_mode(mode)?;
        match mode {
            Mode::A => {
                let seq = self.audio_tokens(g, input.audio(mode)?)?;
                let enc = self.encoder.forward(g, &self.ps, seq)?;
                let pooled = g.slice_rows(enc, 0, 1)?;
                self.head(g, &self.audio_branch()?.head, pooled)
            }
            Mode::V => {
                let v = self.video_branch()?;
                let frames = self.frame_tokens(g, input.video(mode)?, v.cls)?;
                let mut rows = Vec::with_capacity(frames.len());
                for f in frames {
                    let enc = self.encoder.forward(g, &self.ps, f)?;
                    rows.push(g.slice_rows(enc, 0, 1)?);
                }
                let pooled = self.pool_frames(g, &rows)?;
                self.head(g, &v.head, pooled)
            }
            Mode::AV => {
                let fb = self.fusion.as_ref().ok_or_else(|| Error::Contract("model has no fusion branch".into()))?;
                let audio = self.audio_tokens(g, input.audio(mode)?)?;
                let frames = self.frame_tokens(g, input.video(mode)?, fb.cls)?;
                let mut rows = Vec::with_capacity(frames.len());
                for f in frames {
                    let fused = fb.block.forward(g, &self.ps, f, audio)?;
                    let enc = self.encoder.forward(g, &self.ps, fused)?;
                    rows.push(g.slice_rows(enc, 0, 1)?);
                }
                let pooled = self.pool_frames(g, &rows)?;
                self.head(g, &fb.head, pooled)
            }
        }
    }

    fn flop_profile(&self, shapes: &InputShapes, mode: Mode) -> Result<Vec<CostOp>> {
        self.check_mode(mode)?;
        let c = &self.cfg;
        let (d, h) = (c.d, c.heads);
        let n_a = c.audio_windows + 1;
        let n_v = (shapes.image / c.patch) * (shapes.image / c.patch) + 1;
        let mut ops = Vec::new();
        let t = crate::dsp::simpf::pooled_len(shapes.mel_frames, c.simpf_k)?;
        if mode.uses_audio() {
            let enc = &self.audio_branch()?.encoder;
            // Spectral pooling: one forward FFT per mel bin, one inverse.
            ops.push(CostOp::Fft { n: shapes.mel_frames, count: shapes.mel_bins });
            ops.push(CostOp::Fft { n: t, count: shapes.mel_bins });
            ops.extend(enc.flop_profile(t, shapes.mel_bins, d));
            ops.push(CostOp::Elementwise { elems: n_a * d });
        }
        if mode.uses_video() {
            let f = shapes.frames;
            ops.push(CostOp::Linear { rows: f * (n_v - 1), d_in: 3 * c.patch * c.patch, d_out: d, bias: false });
            ops.push(CostOp::Elementwise { elems: f * n_v * d });
        }
        match mode {
            Mode::A => ops.extend(flops::encoder(n_a, d, h, c.ffn, c.layers)),
            Mode::V | Mode::AV => {
                for _ in 0..shapes.frames {
                    if mode == Mode::AV {
                        ops.extend([
                            CostOp::LayerNorm { elems: n_v * d },
                            CostOp::Attention { n_q: n_v, n_kv: n_v, d, heads: h },
                            CostOp::Elementwise { elems: n_v * d },
                            CostOp::LayerNorm { elems: n_v * d },
                            CostOp::LayerNorm { elems: n_a * d },
                            CostOp::Attention { n_q: n_v, n_kv: n_a, d, heads: h },
                            CostOp::Elementwise { elems: n_v * d },
                        ]);
                    }
                    ops.extend(flops::encoder(n_v, d, h, c.ffn, c.layers));
                }
                ops.push(CostOp::Elementwise { elems: shapes.frames * d });
            }
        }
        ops.extend(flops::mlp(1, d, c.head_hidden, NUM_CLASSES));
        Ok(ops)
    }
}

impl UffiaModel {
    /// FLOPs of the audio encoder alone on a `[t, m]` mel.
    pub fn audio_encoder_profile(&self, t: usize, m: usize) -> Result<Vec<CostOp>> {
        Ok(self.audio_branch()?.encoder.flop_profile(t, m, self.cfg.d))
    }

    /// Audio-path cost that depends on the mel length: spectral pooling from
    /// `t` to `floor(k·t)` frames (skipped at `k = 1`) and the conv stack.
    pub fn audio_frontend_profile(&self, t: usize, m: usize, k: f64) -> Result<Vec<CostOp>> {
        let pooled = crate::dsp::simpf::pooled_len(t, k)?;
        let mut ops = Vec::new();
        if pooled < t {
            ops.push(CostOp::Fft { n: t, count: m });
            ops.push(CostOp::Fft { n: pooled, count: m });
        }
        ops.extend(self.audio_branch()?.encoder.stack_profile(pooled, m));
        Ok(ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn tiny() -> ModelConfig {
        ModelConfig {
            d: 8,
            heads: 2,
            ffn: 16,
            layers: 1,
            patch: 4,
            image: 8,
            frames: 2,
            native_frames: 4,
            conv_channels: vec![2],
            audio_windows: 2,
            head_hidden: 8,
            mel_frames: 16,
            mel_bins: 8,
            audio_patch: 4,
            ..ModelConfig::default()
        }
    }

    fn input(seed: u64) -> ModelInput {
        let mut r = rng::seeded(seed);
        ModelInput {
            audio: Some(Tensor::from_fn([8, 8], |_| r.random_range(-20.0..0.0)).unwrap()),
            video: Some(Tensor::from_fn([2, 3, 8, 8], |_| r.random()).unwrap()),
        }
    }

    #[test]
    fn logits_have_four_classes_in_every_mode() {
        let m = UffiaModel::new(&tiny(), Variant::Full, &mut rng::seeded(0)).unwrap();
        for mode in Mode::ALL {
            let out = m.infer(&input(1), mode).unwrap();
            assert_eq!(out.logits.len(), 4);
            assert_eq!(out.pooled.len(), 8);
        }
    }

    #[test]
    fn missing_input_is_contract_error() {
        let m = UffiaModel::new(&tiny(), Variant::Full, &mut rng::seeded(0)).unwrap();
        let mut only_audio = input(1);
        only_audio.video = None;
        assert!(matches!(m.infer(&only_audio, Mode::AV), Err(Error::Contract(_))));
        assert!(m.infer(&only_audio, Mode::A).is_ok());
        let a = UffiaModel::new(&tiny(), Variant::AudioOnly, &mut rng::seeded(0)).unwrap();
        assert!(matches!(a.infer(&input(1), Mode::V), Err(Error::Contract(_))));
    }

    #[test]
    fn variants_drop_unused_parameters() {
        let full = UffiaModel::new(&tiny(), Variant::Full, &mut rng::seeded(0)).unwrap();
        let a = UffiaModel::new(&tiny(), Variant::AudioOnly, &mut rng::seeded(0)).unwrap();
        let v = UffiaModel::new(&tiny(), Variant::VideoOnly, &mut rng::seeded(0)).unwrap();
        assert!(a.params().trainable_count() < full.params().trainable_count());
        assert!(v.params().trainable_count() < full.params().trainable_count());
        assert!(a.params().find("video.proj.w").is_none());
        assert!(v.params().find("audio.conv0.w").is_none());
    }
}
