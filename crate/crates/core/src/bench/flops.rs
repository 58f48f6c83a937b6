//! Symbolic FLOPs accounting.
//!
//! Convention: one multiply-accumulate is 2 FLOPs; softmax and layer norm
//! cost 5 FLOPs per element; other elementwise work (activations, residual
//! and position additions, bias, pooling) costs 1 FLOP per element. An FFT of
//! length `n` costs `5·n·log2(n)`.

use std::fmt;

use crate::error::{Error, Result};

pub const CONVENTION: &str = "MAC=2 FLOPs; softmax/layernorm=5 FLOPs/element; elementwise=1 FLOP/element; FFT=5n·log2(n)";

#[derive(Clone, Debug, PartialEq)]
pub enum CostOp {
    Linear { rows: usize, d_in: usize, d_out: usize, bias: bool },
    /// Projections, scores, softmax, weighted sum and output projection.
    Attention { n_q: usize, n_kv: usize, d: usize, heads: usize },
    Conv { positions: usize, c_in: usize, c_out: usize, kernel: usize },
    Softmax { elems: usize },
    LayerNorm { elems: usize },
    Elementwise { elems: usize },
    Fft { n: usize, count: usize },
    /// An op with no cost model; counting fails on it.
    Custom(String),
}

impl fmt::Display for CostOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl CostOp {
    pub fn flops(&self) -> Option<u64> {
        let u = |v: usize| v as u64;
        Some(match *self {
            CostOp::Linear { rows, d_in, d_out, bias } => 2 * u(rows * d_in * d_out) + if bias { u(rows * d_out) } else { 0 },
            CostOp::Attention { n_q, n_kv, d, heads } => {
                let proj = 2 * u(n_q * d * d) + 2 * 2 * u(n_kv * d * d) + 2 * u(n_q * d * d);
                let bias = u(2 * n_q * d + 2 * n_kv * d);
                let scores = 2 * u(n_q * n_kv * d) + u(n_q * n_kv * heads);
                let softmax = 5 * u(n_q * n_kv * heads);
                let weighted = 2 * u(n_q * n_kv * d);
                proj + bias + scores + softmax + weighted
            }
            CostOp::Conv { positions, c_in, c_out, kernel } => 2 * u(positions * c_in * kernel * c_out) + u(positions * c_out),
            CostOp::Softmax { elems } | CostOp::LayerNorm { elems } => 5 * u(elems),
            CostOp::Elementwise { elems } => u(elems),
            CostOp::Fft { n, count } => {
                if n < 2 {
                    0
                } else {
                    (5.0 * n as f64 * (n as f64).log2()).round() as u64 * u(count)
                }
            }
            CostOp::Custom(_) => return None,
        })
    }
}

/// Sums a profile, listing every op without a cost model on failure.
pub fn count_flops(profile: &[CostOp]) -> Result<u64> {
    let unsupported: Vec<String> = profile
        .iter()
        .filter(|op| op.flops().is_none())
        .map(|op| op.to_string())
        .collect();
    if !unsupported.is_empty() {
        return Err(Error::Unsupported(format!("no FLOPs model for: {}", unsupported.join(", "))));
    }
    Ok(profile.iter().filter_map(CostOp::flops).sum())
}

/// Pre-norm transformer layer over `n` tokens.
pub fn transformer_layer(n: usize, d: usize, heads: usize, ffn: usize) -> Vec<CostOp> {
    vec![
        CostOp::LayerNorm { elems: n * d },
        CostOp::Attention { n_q: n, n_kv: n, d, heads },
        CostOp::Elementwise { elems: n * d },
        CostOp::LayerNorm { elems: n * d },
        CostOp::Linear { rows: n, d_in: d, d_out: ffn, bias: true },
        CostOp::Elementwise { elems: n * ffn },
        CostOp::Linear { rows: n, d_in: ffn, d_out: d, bias: true },
        CostOp::Elementwise { elems: n * d },
    ]
}

pub fn encoder(n: usize, d: usize, heads: usize, ffn: usize, layers: usize) -> Vec<CostOp> {
    let mut ops: Vec<CostOp> = (0..layers).flat_map(|_| transformer_layer(n, d, heads, ffn)).collect();
    ops.push(CostOp::LayerNorm { elems: n * d });
    ops
}

pub fn mlp(rows: usize, d_in: usize, hidden: usize, d_out: usize) -> Vec<CostOp> {
    vec![
        CostOp::Linear { rows, d_in, d_out: hidden, bias: true },
        CostOp::Elementwise { elems: rows * hidden },
        CostOp::Linear { rows, d_in: hidden, d_out, bias: true },
    ]
}
