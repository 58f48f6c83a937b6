//! Multi-head scaled dot-product attention.

use crate::error::{Error, Result};
use crate::fusion::layers::Linear;
use crate::numerics::{Graph, ParamStore, Real, Var};
use crate::rng::Rng;

/// Projections `W_Q, W_K, W_V, W_O` (each `d×d`, with bias) for `heads` heads.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub d: usize,
    pub heads: usize,
}

/// Attention output plus the per-head `[n_q, n_kv]` weight matrices.
#[derive(Clone, Debug)]
pub struct Attended {
    pub out: Var,
    pub weights: Vec<Var>,
}

impl AttentionParams {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::config(format!("model dim {d} is not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Linear::new(ps, &format!("{name}.q"), d, d, true, rng)?,
            k: Linear::new(ps, &format!("{name}.k"), d, d, true, rng)?,
            v: Linear::new(ps, &format!("{name}.v"), d, d, true, rng)?,
            o: Linear::new(ps, &format!("{name}.o"), d, d, true, rng)?,
            d,
            heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Closed-form parameter count: `4d² + 4d`.
    pub fn param_count(d: usize) -> usize {
        4 * d * d + 4 * d
    }
}

/// `softmax(Q Kᵀ / sqrt(d/heads)) V` per head, heads concatenated then
/// output-projected. The result has as many rows as `q_tokens`.
pub fn mha(g: &mut Graph, ps: &ParamStore, p: &AttentionParams, q_tokens: Var, k_tokens: Var, v_tokens: Var) -> Result<Attended> {
    for (what, t) in [("query", q_tokens), ("key", k_tokens), ("value", v_tokens)] {
        let (_, d) = g.value(t).dims2()?;
        if d != p.d {
            return Err(Error::dim(format!("{what} tokens have dim {d}, attention expects {}", p.d)));
        }
    }
    if g.shape(k_tokens)[0] != g.shape(v_tokens)[0] {
        return Err(Error::dim(format!(
            "{} keys against {} values",
            g.shape(k_tokens)[0],
            g.shape(v_tokens)[0]
        )));
    }
    let q = p.q.forward(g, ps, q_tokens)?;
    let k = p.k.forward(g, ps, k_tokens)?;
    let v = p.v.forward(g, ps, v_tokens)?;
    let dh = p.head_dim();
    let scale = 1.0 / (dh as Real).sqrt();
    let mut heads = Vec::with_capacity(p.heads);
    let mut weights = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let (qh, kh, vh) = if p.heads == 1 {
            (q, k, v)
        } else {
            (g.slice_cols(q, h * dh, dh)?, g.slice_cols(k, h * dh, dh)?, g.slice_cols(v, h * dh, dh)?)
        };
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let w = g.softmax(scores, 1)?;
        heads.push(g.matmul(w, vh)?);
        weights.push(w);
    }
    let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
    let out = p.o.forward(g, ps, cat)?;
    Ok(Attended { out, weights })
}

/// Video tokens query audio tokens.
pub fn cross_attention_layer(g: &mut Graph, ps: &ParamStore, p: &AttentionParams, video: Var, audio: Var) -> Result<Attended> {
    if g.value(audio).is_empty() {
        return Err(Error::input("cross-attention needs at least one audio token"));
    }
    mha(g, ps, p, video, audio, audio)
}
