//! Fusion restricted to a handful of shared bottleneck tokens.

use crate::error::{Error, Result};
use crate::fusion::encoder::TransformerLayer;
use crate::numerics::{Graph, ParamStore, Var};
use crate::rng::Rng;

/// One fusion layer with disjoint video (`θ_v`) and audio (`θ_a`) parameters.
#[derive(Clone, Debug)]
pub struct BottleneckLayer {
    pub video: TransformerLayer,
    pub audio: TransformerLayer,
}

#[derive(Clone, Copy, Debug)]
pub struct BottleneckOutput {
    pub video: Var,
    pub audio: Var,
    /// Bottleneck tokens after the video step.
    pub fused_mid: Var,
    /// Bottleneck tokens after the audio step.
    pub fused: Var,
}

impl BottleneckLayer {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize, heads: usize, ffn: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            video: TransformerLayer::new(ps, &format!("{name}.video"), d, heads, ffn, rng)?,
            audio: TransformerLayer::new(ps, &format!("{name}.audio"), d, heads, ffn, rng)?,
        })
    }

    /// Runs `θ_v` over `[z_v ‖ z_f]`, then `θ_a` over `[z_a ‖ ẑ_f]`. With
    /// `frozen_mid`, that tensor stands in for `ẑ_f` in the audio step, which
    /// cuts every path from video to audio.
    pub fn forward(
        &self,
        g: &mut Graph,
        ps: &ParamStore,
        z_v: Var,
        z_a: Var,
        z_f: Var,
        frozen_mid: Option<Var>,
    ) -> Result<BottleneckOutput> {
        let b = g.shape(z_f)[0];
        if b == 0 {
            return Err(Error::config("bottleneck needs at least one token"));
        }
        let nv = g.shape(z_v)[0];
        let na = g.shape(z_a)[0];
        let joint = g.concat_rows(&[z_v, z_f])?;
        let joint = self.video.forward(g, ps, joint)?;
        let video = g.slice_rows(joint, 0, nv)?;
        let fused_mid = g.slice_rows(joint, nv, b)?;
        let mid = frozen_mid.unwrap_or(fused_mid);
        let joint = g.concat_rows(&[z_a, mid])?;
        let joint = self.audio.forward(g, ps, joint)?;
        Ok(BottleneckOutput {
            video,
            audio: g.slice_rows(joint, 0, na)?,
            fused_mid,
            fused: g.slice_rows(joint, na, b)?,
        })
    }
}

/// Validates a bottleneck token count.
pub fn check_bottleneck_tokens(b: usize) -> Result<()> {
    if b == 0 {
        Err(Error::config("bottleneck token count must be positive"))
    } else {
        Ok(())
    }
}
