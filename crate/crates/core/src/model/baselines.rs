//! Fusion baselines that consume the full mel and every native frame.

use crate::bench::flops::{self, CostOp};
use crate::error::{Error, Result};
use crate::fusion::{cross_attention_layer, learned_tokens, AttentionParams, BottleneckLayer, Encoder, FeedForward, LayerNorm, Linear, Mlp};
use crate::label::NUM_CLASSES;
use crate::model::{Classifier, ForwardVars, InputShapes, InputSpec, Mode, ModelConfig, ModelInput, ModelKind};
use crate::numerics::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::rng::Rng;
use crate::video::patchify;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionKind {
    /// One encoder over `[cls; audio; video]`.
    SelfAttention,
    /// Video tokens query audio tokens in every layer.
    Cross,
    /// Modalities exchange information only through bottleneck tokens.
    Bottleneck,
}

#[derive(Clone, Debug)]
struct CrossLayer {
    ln_q: LayerNorm,
    ln_kv: LayerNorm,
    attn: AttentionParams,
    ln_ffn: LayerNorm,
    ffn: FeedForward,
}

#[derive(Clone, Debug)]
enum Body {
    SelfAttention(Encoder),
    Cross { layers: Vec<CrossLayer>, final_ln: LayerNorm },
    Bottleneck { layers: Vec<BottleneckLayer>, tokens: ParamId, cls_a: ParamId, final_ln: LayerNorm },
}

#[derive(Clone, Debug)]
pub struct FusionBaseline {
    cfg: ModelConfig,
    kind: FusionKind,
    ps: ParamStore,
    audio_proj: Linear,
    audio_pos: ParamId,
    video_proj: Linear,
    video_pos: ParamId,
    frame_pos: ParamId,
    cls: ParamId,
    body: Body,
    head: Mlp,
}

/// Square `p×p` patches of a `[T, M]` mel, row-major: `[(T/p)(M/p), p²]`.
pub fn mel_patches(mel: &Tensor, p: usize) -> Result<Tensor> {
    let (t, m) = mel.dims2()?;
    if p == 0 || t % p != 0 || m % p != 0 {
        return Err(Error::dim(format!("{t}×{m} mel is not divisible into {p}×{p} patches")));
    }
    let mut out = Vec::with_capacity(t * m);
    for pt in 0..t / p {
        for pm in 0..m / p {
            for y in 0..p {
                let row = (pt * p + y) * m + pm * p;
                out.extend_from_slice(&mel.data()[row..row + p]);
            }
        }
    }
    Tensor::new([(t / p) * (m / p), p * p], out)
}

impl FusionBaseline {
    pub fn new(cfg: &ModelConfig, kind: FusionKind, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new();
        let (d, h, f) = (cfg.d, cfg.heads, cfg.ffn);
        let ap = cfg.audio_patch;
        let n_audio = (cfg.mel_frames / ap) * (cfg.mel_bins / ap);
        let audio_proj = Linear::new(&mut ps, "audio.proj", ap * ap, d, true, rng)?;
        let audio_pos = learned_tokens(&mut ps, "audio.pos", n_audio, d, rng)?;
        let video_proj = Linear::new(&mut ps, "video.proj", 3 * cfg.patch * cfg.patch, d, false, rng)?;
        let video_pos = learned_tokens(&mut ps, "video.pos", cfg.patches_per_frame(), d, rng)?;
        let frame_pos = learned_tokens(&mut ps, "video.frame_pos", cfg.native_frames, d, rng)?;
        let cls = learned_tokens(&mut ps, "cls", 1, d, rng)?;
        let body = match kind {
            FusionKind::SelfAttention => Body::SelfAttention(Encoder::new(&mut ps, "encoder", d, h, f, cfg.layers, rng)?),
            FusionKind::Cross => {
                let layers = (0..cfg.layers)
                    .map(|i| {
                        let n = format!("cross.{i}");
                        Ok(CrossLayer {
                            ln_q: LayerNorm::new(&mut ps, &format!("{n}.ln_q"), d, rng)?,
                            ln_kv: LayerNorm::new(&mut ps, &format!("{n}.ln_kv"), d, rng)?,
                            attn: AttentionParams::new(&mut ps, &format!("{n}.attn"), d, h, rng)?,
                            ln_ffn: LayerNorm::new(&mut ps, &format!("{n}.ln_ffn"), d, rng)?,
                            ffn: FeedForward::new(&mut ps, &format!("{n}.ffn"), d, f, rng)?,
                        })
                    })
                    .collect::<Result<_>>()?;
                Body::Cross { layers, final_ln: LayerNorm::new(&mut ps, "final_ln", d, rng)? }
            }
            FusionKind::Bottleneck => {
                let layers = (0..cfg.layers)
                    .map(|i| BottleneckLayer::new(&mut ps, &format!("bottleneck.{i}"), d, h, f, rng))
                    .collect::<Result<_>>()?;
                Body::Bottleneck {
                    layers,
                    tokens: learned_tokens(&mut ps, "bottleneck.tokens", cfg.bottleneck_tokens, d, rng)?,
                    cls_a: learned_tokens(&mut ps, "cls.a", 1, d, rng)?,
                    final_ln: LayerNorm::new(&mut ps, "final_ln", d, rng)?,
                }
            }
        };
        let head = Mlp::new(&mut ps, "head", d, cfg.head_hidden, NUM_CLASSES, rng)?;
        Ok(Self { cfg: cfg.clone(), kind, ps, audio_proj, audio_pos, video_proj, video_pos, frame_pos, cls, body, head })
    }

    fn audio_tokens(&self, g: &mut Graph, mel: &Tensor) -> Result<Var> {
        let [mean, std] = self.cfg.audio_norm;
        let mel = mel.map(|v| (v - mean as Real) / std as Real);
        let patches = g.input(mel_patches(&mel, self.cfg.audio_patch)?);
        let x = self.audio_proj.forward(g, &self.ps, patches)?;
        let pos = g.param(&self.ps, self.audio_pos);
        if g.shape(pos) != g.shape(x) {
            return Err(Error::dim(format!("{:?} audio tokens against {:?} positions", g.shape(x), g.shape(pos))));
        }
        g.add(x, pos)
    }

    fn video_tokens(&self, g: &mut Graph, frames: &Tensor) -> Result<Var> {
        let s = frames.shape();
        if s.len() != 4 || s[1] != 3 || s[2] != self.cfg.image || s[3] != self.cfg.image {
            return Err(Error::dim(format!("expected [n, 3, {0}, {0}] frames, got {s:?}", self.cfg.image)));
        }
        if s[0] > self.cfg.native_frames {
            return Err(Error::dim(format!("{} frames, at most {} supported", s[0], self.cfg.native_frames)));
        }
        let per = frames.len() / s[0];
        let patches = (0..s[0])
            .map(|i| patchify(&frames.data()[i * per..(i + 1) * per], s[2], s[3], self.cfg.patch))
            .collect::<Result<Vec<_>>>()?;
        let patches = Tensor::concat_rows(&patches.iter().collect::<Vec<_>>())?;
        let patches = g.input(patches);
        let x = self.video_proj.forward(g, &self.ps, patches)?;
        let spatial = g.param(&self.ps, self.video_pos);
        let temporal = g.param(&self.ps, self.frame_pos);
        let mut pos = Vec::with_capacity(s[0]);
        for i in 0..s[0] {
            let row = g.slice_rows(temporal, i, 1)?;
            pos.push(g.add_bias(spatial, row)?);
        }
        let pos = g.concat_rows(&pos)?;
        g.add(x, pos)
    }
}

impl Classifier for FusionBaseline {
    fn kind(&self) -> ModelKind {
        match self.kind {
            FusionKind::SelfAttention => ModelKind::FusionSelf,
            FusionKind::Cross => ModelKind::FusionCross,
            FusionKind::Bottleneck => ModelKind::FusionBottleneck,
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
        &[Mode::AV]
    }

    fn input_spec(&self) -> InputSpec {
        InputSpec { simpf_k: None, sampled_frames: None }
    }

    fn forward(&self, g: &mut Graph, input: &ModelInput, mode: Mode) -> Result<ForwardVars> {
        self.check_mode(mode)?;
        let a = self.audio_tokens(g, input.audio(mode)?)?;
        let v = self.video_tokens(g, input.video(mode)?)?;
        let cls = g.param(&self.ps, self.cls);
        let pooled = match &self.body {
            Body::SelfAttention(enc) => {
                let seq = g.concat_rows(&[cls, a, v])?;
                let out = enc.forward(g, &self.ps, seq)?;
                g.slice_rows(out, 0, 1)?
            }
            Body::Cross { layers, final_ln } => {
                let mut x = g.concat_rows(&[cls, v])?;
                for l in layers {
                    let q = l.ln_q.forward(g, &self.ps, x)?;
                    let kv = l.ln_kv.forward(g, &self.ps, a)?;
                    let c = cross_attention_layer(g, &self.ps, &l.attn, q, kv)?;
                    x = g.add(x, c.out)?;
                    let hdn = l.ln_ffn.forward(g, &self.ps, x)?;
                    let f = l.ffn.forward(g, &self.ps, hdn)?;
                    x = g.add(x, f)?;
                }
                let x = final_ln.forward(g, &self.ps, x)?;
                g.slice_rows(x, 0, 1)?
            }
            Body::Bottleneck { layers, tokens, cls_a, final_ln } => {
                let cls_a = g.param(&self.ps, *cls_a);
                let mut z_v = g.concat_rows(&[cls, v])?;
                let mut z_a = g.concat_rows(&[cls_a, a])?;
                let mut z_f = g.param(&self.ps, *tokens);
                for l in layers {
                    let out = l.forward(g, &self.ps, z_v, z_a, z_f, None)?;
                    (z_v, z_a, z_f) = (out.video, out.audio, out.fused);
                }
                let cv = g.slice_rows(z_v, 0, 1)?;
                let ca = g.slice_rows(z_a, 0, 1)?;
                let both = g.concat_rows(&[cv, ca])?;
                let both = final_ln.forward(g, &self.ps, both)?;
                g.mean_rows(both)?
            }
        };
        let logits = self.head.forward(g, &self.ps, pooled)?;
        Ok(ForwardVars { logits, pooled })
    }

    fn flop_profile(&self, shapes: &InputShapes, mode: Mode) -> Result<Vec<CostOp>> {
        self.check_mode(mode)?;
        let c = &self.cfg;
        let (d, h, f) = (c.d, c.heads, c.ffn);
        let ap = c.audio_patch;
        let n_a = (shapes.mel_frames / ap) * (shapes.mel_bins / ap);
        let n_v = shapes.frames * (shapes.image / c.patch) * (shapes.image / c.patch);
        let mut ops = vec![
            CostOp::Elementwise { elems: shapes.mel_frames * shapes.mel_bins },
            CostOp::Linear { rows: n_a, d_in: ap * ap, d_out: d, bias: true },
            CostOp::Elementwise { elems: n_a * d },
            CostOp::Linear { rows: n_v, d_in: 3 * c.patch * c.patch, d_out: d, bias: false },
            CostOp::Elementwise { elems: 2 * n_v * d },
        ];
        match self.kind {
            FusionKind::SelfAttention => ops.extend(flops::encoder(1 + n_a + n_v, d, h, f, c.layers)),
            FusionKind::Cross => {
                let n = n_v + 1;
                for _ in 0..c.layers {
                    ops.extend([
                        CostOp::LayerNorm { elems: n * d },
                        CostOp::LayerNorm { elems: n_a * d },
                        CostOp::Attention { n_q: n, n_kv: n_a, d, heads: h },
                        CostOp::Elementwise { elems: n * d },
                        CostOp::LayerNorm { elems: n * d },
                        CostOp::Linear { rows: n, d_in: d, d_out: f, bias: true },
                        CostOp::Elementwise { elems: n * f },
                        CostOp::Linear { rows: n, d_in: f, d_out: d, bias: true },
                        CostOp::Elementwise { elems: n * d },
                    ]);
                }
                ops.push(CostOp::LayerNorm { elems: n * d });
            }
            FusionKind::Bottleneck => {
                let b = c.bottleneck_tokens;
                for _ in 0..c.layers {
                    ops.extend(flops::transformer_layer(n_v + 1 + b, d, h, f));
                    ops.extend(flops::transformer_layer(n_a + 1 + b, d, h, f));
                }
                ops.push(CostOp::LayerNorm { elems: 2 * d });
                ops.push(CostOp::Elementwise { elems: 2 * d });
            }
        }
        ops.extend(flops::mlp(1, d, c.head_hidden, NUM_CLASSES));
        Ok(ops)
    }
}
