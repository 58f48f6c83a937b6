//! Pre-norm transformer layers and the shared encoder.

use crate::error::Result;
use crate::fusion::attention::{mha, AttentionParams};
use crate::fusion::layers::{FeedForward, LayerNorm};
use crate::numerics::{Graph, ParamStore, Var};
use crate::rng::Rng;

/// `x + MHA(LN x)`, then `+ FFN(LN ·)`.
#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub ln_attn: LayerNorm,
    pub attn: AttentionParams,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl TransformerLayer {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize, heads: usize, ffn: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            ln_attn: LayerNorm::new(ps, &format!("{name}.ln_attn"), d, rng)?,
            attn: AttentionParams::new(ps, &format!("{name}.attn"), d, heads, rng)?,
            ln_ffn: LayerNorm::new(ps, &format!("{name}.ln_ffn"), d, rng)?,
            ffn: FeedForward::new(ps, &format!("{name}.ffn"), d, ffn, rng)?,
        })
    }

    pub fn param_count(d: usize, ffn: usize) -> usize {
        AttentionParams::param_count(d) + 4 * d + 2 * d * ffn + ffn + d
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, x: Var) -> Result<Var> {
        let h = self.ln_attn.forward(g, ps, x)?;
        let a = mha(g, ps, &self.attn, h, h, h)?;
        let x = g.add(x, a.out)?;
        let h = self.ln_ffn.forward(g, ps, x)?;
        let f = self.ffn.forward(g, ps, h)?;
        g.add(x, f)
    }
}

/// `L` transformer layers followed by a final layer norm.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub layers: Vec<TransformerLayer>,
    pub final_ln: LayerNorm,
}

impl Encoder {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize, heads: usize, ffn: usize, layers: usize, rng: &mut Rng) -> Result<Self> {
        let layers = (0..layers)
            .map(|i| TransformerLayer::new(ps, &format!("{name}.{i}"), d, heads, ffn, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            final_ln: LayerNorm::new(ps, &format!("{name}.final_ln"), d, rng)?,
        })
    }

    pub fn param_count(d: usize, ffn: usize, layers: usize) -> usize {
        layers * TransformerLayer::param_count(d, ffn) + 2 * d
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(g, ps, x)?;
        }
        self.final_ln.forward(g, ps, x)
    }
}
