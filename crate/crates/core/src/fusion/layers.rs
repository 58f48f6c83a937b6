//! Parameterised building blocks shared by every model.

use crate::error::Result;
use crate::numerics::{Graph, Init, ParamId, ParamStore, Real, Var};
use crate::rng::Rng;

/// Standard deviation for learned tokens and position embeddings.
pub const TOKEN_INIT_STD: Real = 0.02;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut Rng) -> Result<Self> {
        let w = ps.init(
            format!("{name}.w"),
            &[d_in, d_out],
            Init::XavierUniform { fan_in: d_in, fan_out: d_out },
            rng,
        )?;
        let b = if bias {
            Some(ps.init(format!("{name}.b"), &[d_out], Init::Zeros, rng)?)
        } else {
            None
        };
        Ok(Self { w, b, d_in, d_out })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(ps, self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(ps, b);
                g.add_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            gain: ps.init(format!("{name}.gain"), &[d], Init::Ones, rng)?,
            bias: ps.init(format!("{name}.bias"), &[d], Init::Zeros, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, x: Var) -> Result<Var> {
        let (gain, bias) = (g.param(ps, self.gain), g.param(ps, self.bias));
        g.layer_norm(x, gain, bias)
    }
}

/// Position-wise `d → hidden → d` with GELU.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(ps: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            up: Linear::new(ps, &format!("{name}.up"), d, hidden, true, rng)?,
            down: Linear::new(ps, &format!("{name}.down"), hidden, d, true, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, x: Var) -> Result<Var> {
        let h = self.up.forward(g, ps, x)?;
        let h = g.gelu(h);
        self.down.forward(g, ps, h)
    }
}

/// Two linear layers with a ReLU hidden layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, hidden: usize, d_out: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(ps, &format!("{name}.hidden"), d_in, hidden, true, rng)?,
            out: Linear::new(ps, &format!("{name}.out"), hidden, d_out, true, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, ps, x)?;
        let h = g.relu(h);
        self.out.forward(g, ps, h)
    }
}

/// A learned `[rows, d]` block: class tokens, position tables, bottleneck tokens.
pub fn learned_tokens(ps: &mut ParamStore, name: &str, rows: usize, d: usize, rng: &mut Rng) -> Result<ParamId> {
    ps.init(name, &[rows, d], Init::TruncNormal(TOKEN_INIT_STD), rng)
}
