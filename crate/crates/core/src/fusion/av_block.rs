//! Audio-to-video fusion: frame self-attention, then frame tokens query the
//! audio sequence.

use crate::error::Result;
use crate::fusion::attention::{cross_attention_layer, mha, AttentionParams};
use crate::fusion::layers::LayerNorm;
use crate::numerics::{Graph, ParamStore, Var};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct AvFusionBlock {
    pub ln_self: LayerNorm,
    pub self_attn: AttentionParams,
    pub ln_query: LayerNorm,
    pub ln_audio: LayerNorm,
    pub cross_attn: AttentionParams,
}

impl AvFusionBlock {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            ln_self: LayerNorm::new(ps, &format!("{name}.ln_self"), d, rng)?,
            self_attn: AttentionParams::new(ps, &format!("{name}.self_attn"), d, heads, rng)?,
            ln_query: LayerNorm::new(ps, &format!("{name}.ln_query"), d, rng)?,
            ln_audio: LayerNorm::new(ps, &format!("{name}.ln_audio"), d, rng)?,
            cross_attn: AttentionParams::new(ps, &format!("{name}.cross_attn"), d, heads, rng)?,
        })
    }

    pub fn param_count(d: usize) -> usize {
        2 * AttentionParams::param_count(d) + 6 * d
    }

    /// `S = MHA(LN V) + V`, `O = MHCA(LN S, LN A) + S`. Returns `(S, O)`.
    pub fn forward_parts(&self, g: &mut Graph, ps: &ParamStore, video: Var, audio: Var) -> Result<(Var, Var)> {
        let h = self.ln_self.forward(g, ps, video)?;
        let a = mha(g, ps, &self.self_attn, h, h, h)?;
        let s = g.add(video, a.out)?;
        let q = self.ln_query.forward(g, ps, s)?;
        let kv = self.ln_audio.forward(g, ps, audio)?;
        let c = cross_attention_layer(g, ps, &self.cross_attn, q, kv)?;
        let o = g.add(s, c.out)?;
        Ok((s, o))
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, video: Var, audio: Var) -> Result<Var> {
        Ok(self.forward_parts(g, ps, video, audio)?.1)
    }
}
