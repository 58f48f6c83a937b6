//! Small convolutional audio encoder producing `T_a` tokens.

use crate::bench::flops::{self, CostOp};
use crate::error::{Error, Result};
use crate::fusion::Mlp;
use crate::numerics::graph::PoolKind;
use crate::numerics::{Graph, Init, ParamId, ParamStore, Real, Tensor, Var};
use crate::rng::Rng;

#[derive(Clone, Debug)]
struct ConvBlock {
    w: ParamId,
    b: ParamId,
    c_in: usize,
    c_out: usize,
}

/// Conv blocks (3×3, ReLU, 2×2 average pool) over the `[T, M]` log-mel, a
/// mean over frequency, per-window max plus mean over time, then an MLP to
/// `d`. A block stops pooling time once that would leave fewer than `T_a`
/// steps, and stops pooling frequency at one bin.
#[derive(Clone, Debug)]
pub struct AudioConvEncoder {
    blocks: Vec<ConvBlock>,
    mlp: Mlp,
    windows: usize,
    norm: [f64; 2],
}

impl AudioConvEncoder {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        channels: &[usize],
        windows: usize,
        d: usize,
        norm: [f64; 2],
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(channels.len());
        let mut c_in = 1;
        for (i, &c_out) in channels.iter().enumerate() {
            let fan_in = c_in * 9;
            let w = ps.init(
                format!("{name}.conv{i}.w"),
                &[c_out, c_in, 1, 3, 3],
                Init::XavierUniform { fan_in, fan_out: c_out * 9 },
                rng,
            )?;
            let b = ps.init(format!("{name}.conv{i}.b"), &[c_out], Init::Zeros, rng)?;
            blocks.push(ConvBlock { w, b, c_in, c_out });
            c_in = c_out;
        }
        let mlp = Mlp::new(ps, &format!("{name}.mlp"), c_in, d, d, rng)?;
        Ok(Self { blocks, mlp, windows, norm })
    }

    /// Pool factors `(time, freq)` per block for a `[t, m]` input.
    fn pool_plan(&self, mut t: usize, mut m: usize) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .map(|_| {
                let pt = if t / 2 >= self.windows { 2 } else { 1 };
                let pf = if m >= 2 { 2 } else { 1 };
                t /= pt;
                m /= pf;
                (pt, pf)
            })
            .collect()
    }

    /// `[T_a, d]` audio tokens for a log-mel `[T, M]`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamStore, mel: &Tensor) -> Result<Var> {
        let (t, m) = mel.dims2()?;
        if t < self.windows {
            return Err(Error::dim(format!("{t} mel frames cannot fill {} windows", self.windows)));
        }
        let [mean, std] = self.norm;
        let x = mel.map(|v| (v - mean as Real) / std as Real).reshape([1, 1, t, m])?;
        let mut x = g.input(x);
        for (block, (pt, pf)) in self.blocks.iter().zip(self.pool_plan(t, m)) {
            let (w, b) = (g.param(ps, block.w), g.param(ps, block.b));
            x = g.conv3d(x, w, b, [0, 1, 1])?;
            x = g.relu(x);
            if pt * pf > 1 {
                x = g.pool3d(x, [1, pt, pf], PoolKind::Avg)?;
            }
        }
        let s = g.shape(x).to_vec();
        let (c, tt, mm) = (s[0], s[2], s[3]);
        let x = g.reshape(x, &[c * tt, mm])?;
        let x = g.mean_last(x)?;
        let x = g.reshape(x, &[c, tt])?;
        let x = g.window_max_mean(x, self.windows)?;
        let x = g.transpose(x)?;
        self.mlp.forward(g, ps, x)
    }

    pub fn flop_profile(&self, t: usize, m: usize, d: usize) -> Vec<CostOp> {
        let mut ops = self.stack_profile(t, m);
        let c = self.blocks.last().map_or(1, |b| b.c_out);
        ops.extend(flops::mlp(self.windows, c, d, d));
        ops
    }

    /// Everything up to the window pooling: the part whose cost follows the
    /// number of mel frames. The token MLP always sees `T_a` rows.
    pub fn stack_profile(&self, t: usize, m: usize) -> Vec<CostOp> {
        let mut ops = Vec::new();
        ops.push(CostOp::Elementwise { elems: t * m });
        let (mut tt, mut mm) = (t, m);
        for (block, (pt, pf)) in self.blocks.iter().zip(self.pool_plan(t, m)) {
            ops.push(CostOp::Conv { positions: tt * mm, c_in: block.c_in, c_out: block.c_out, kernel: 9 });
            ops.push(CostOp::Elementwise { elems: tt * mm * block.c_out });
            if pt * pf > 1 {
                ops.push(CostOp::Elementwise { elems: tt * mm * block.c_out });
            }
            tt /= pt;
            mm /= pf;
        }
        let c = self.blocks.last().map_or(1, |b| b.c_out);
        ops.push(CostOp::Elementwise { elems: c * tt * mm });
        ops.push(CostOp::Elementwise { elems: 2 * c * tt });
        ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn constant_mel_gives_identical_tokens() {
        let mut ps = ParamStore::new();
        let enc = AudioConvEncoder::new(&mut ps, "a", &[3, 5], 4, 6, [0.0, 1.0], &mut rng::seeded(1)).unwrap();
        let mut g = Graph::new();
        let out = enc.forward(&mut g, &ps, &Tensor::full([32, 16], -2.0).unwrap()).unwrap();
        let v = g.value(out);
        assert_eq!(v.shape(), &[4, 6]);
        for i in 1..4 {
            assert_eq!(v.row(i), v.row(0));
        }
    }

    #[test]
    fn pools_stop_at_window_count() {
        let mut ps = ParamStore::new();
        let enc = AudioConvEncoder::new(&mut ps, "a", &[2, 2, 2, 2], 8, 4, [0.0, 1.0], &mut rng::seeded(1)).unwrap();
        assert_eq!(enc.pool_plan(64, 128), vec![(2, 2), (2, 2), (2, 2), (1, 2)]);
        let mut g = Graph::new();
        let out = enc.forward(&mut g, &ps, &Tensor::zeros([64, 128]).unwrap()).unwrap();
        assert_eq!(g.shape(out), &[8, 4]);
    }
}
