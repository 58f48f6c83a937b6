//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the node list is already a topological order and
//! [`Graph::backward`] simply walks it in reverse. Parameters enter the graph
//! through [`Graph::param`], which binds each [`ParamId`] to exactly one node;
//! a parameter used in several places therefore accumulates the partials of
//! all its consumers on that node.
//!
//! Broadcasting is limited to [`Graph::add_bias`] (trailing-axis bias); every
//! other op requires exact shape agreement.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::kernels::{matmul, matmul_nt, matmul_tn};
use crate::numerics::param::{ParamGrads, ParamId, ParamStore};
use crate::numerics::{Real, Tensor, LAYER_NORM_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of a stride-1 3-D convolution over `[C, T, H, W]` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeom {
    pub fn output(&self) -> [usize; 3] {
        let mut o = [0; 3];
        for a in 0..3 {
            o[a] = self.input[a] + 2 * self.padding[a] + 1 - self.kernel[a];
        }
        o
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Real),
    AddBias(Var, Var),
    Relu(Var),
    Gelu(Var),
    Softmax {
        x: Var,
        inner: usize,
        axis_len: usize,
    },
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<Real>,
        inv_std: Vec<Real>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<Real>,
    },
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    MeanLast(Var),
    ConcatRows(Vec<Var>),
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    Reshape(Var),
    Conv3d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<Real>,
    },
    Pool3d {
        x: Var,
        kind: PoolKind,
        window: [usize; 3],
        argmax: Vec<usize>,
    },
    WindowMaxMean {
        x: Var,
        argmax: Vec<usize>,
        bounds: Vec<(usize, usize)>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Coarse op categories, exposed for tracing and op counting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Leaf,
    Param,
    MatMul,
    Transpose,
    Elementwise,
    Bias,
    Activation,
    Softmax,
    LayerNorm,
    Loss,
    Reduce,
    Shape,
    Conv,
    Pool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

const GELU_C: Real = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: Real = 0.044_715;

fn gelu(x: Real) -> Real {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: Real) -> Real {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what}: non-finite input")))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Constant input: no gradient is tracked.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf; its gradient is available from [`Gradients::wrt`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a stored parameter. Repeated calls with the same id return the
    /// same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Param(id), p.trainable);
        self.params.insert(id, v);
        v
    }

    /// The parameter a node was bound from, if any.
    pub fn param_id(&self, v: Var) -> Option<ParamId> {
        match self.nodes[v.0].op {
            Op::Param(id) => Some(id),
            _ => None,
        }
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        match &self.nodes[v.0].op {
            Op::Leaf => OpKind::Leaf,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) | Op::MatMulNt(..) => OpKind::MatMul,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Add(..) | Op::Sub(..) | Op::Mul(..) | Op::Scale(..) => OpKind::Elementwise,
            Op::AddBias(..) => OpKind::Bias,
            Op::Relu(_) | Op::Gelu(_) => OpKind::Activation,
            Op::Softmax { .. } | Op::LogSoftmax(_) => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::CrossEntropy { .. } => OpKind::Loss,
            Op::Sum(_) | Op::Mean(_) | Op::MeanRows(_) | Op::MeanLast(_) => OpKind::Reduce,
            Op::ConcatRows(_)
            | Op::SliceRows { .. }
            | Op::ConcatCols(_)
            | Op::SliceCols { .. }
            | Op::Reshape(_) => OpKind::Shape,
            Op::Conv3d { .. } => OpKind::Conv,
            Op::Pool3d { .. } | Op::WindowMaxMean { .. } => OpKind::Pool,
        }
    }

    // ---- linear algebra -------------------------------------------------

    /// `a[m×k] · b[k×n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul: inner extents differ ({m}×{k} · {k2}×{n})"
            )));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::new([m, n], out)?, Op::MatMul(a, b), needs))
    }

    /// `a[m×k] · b[n×k]ᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (n, k2) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul_nt: inner extents differ ({m}×{k} · ({n}×{k2})ᵀ)"
            )));
        }
        let out = matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::new([m, n], out)?, Op::MatMulNt(a, b), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose2()?;
        let needs = self.needs(&[a]);
        Ok(self.push(t, Op::Transpose(a), needs))
    }

    // ---- elementwise ----------------------------------------------------

    fn zip_with(&self, a: Var, b: Var, what: &str, f: impl Fn(Real, Real) -> Real) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, what)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, s: Real) -> Var {
        let t = self.value(a).map(|x| x * s);
        let needs = self.needs(&[a]);
        self.push(t, Op::Scale(a, s), needs)
    }

    /// Adds a bias vector along the trailing axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let d = tx.last_dim();
        if tb.len() != d {
            return Err(Error::dim(format!(
                "add_bias: bias of {} values against trailing extent {d}",
                tb.len()
            )));
        }
        let mut out = tx.clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let needs = self.needs(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.max(0.0));
        let needs = self.needs(&[x]);
        self.push(t, Op::Relu(x), needs)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(gelu);
        let needs = self.needs(&[x]);
        self.push(t, Op::Gelu(x), needs)
    }

    // ---- normalisation ---------------------------------------------------

    /// Softmax along `axis`, stabilised by subtracting the running maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        check_finite(t, "softmax")?;
        let shape = t.shape();
        if axis >= shape.len() {
            return Err(Error::dim(format!("softmax axis {axis} on shape {shape:?}")));
        }
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * axis_len * inner + j * inner + i;
                let mx = (0..axis_len).map(|j| src[at(j)]).fold(Real::NEG_INFINITY, Real::max);
                let mut z = 0.0;
                for j in 0..axis_len {
                    let e = (src[at(j)] - mx).exp();
                    out[at(j)] = e;
                    z += e;
                }
                for j in 0..axis_len {
                    out[at(j)] /= z;
                }
            }
        }
        let out = Tensor::new(shape, out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::Softmax { x, inner, axis_len }, needs))
    }

    /// Log-softmax along the trailing axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        check_finite(t, "log_softmax")?;
        let d = t.last_dim();
        let mut out = t.clone();
        for row in out.data_mut().chunks_mut(d) {
            let mx = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<Real>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::LogSoftmax(x), needs))
    }

    /// Row-wise layer normalisation over the trailing axis with affine gain
    /// and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let t = self.value(x);
        let d = t.last_dim();
        if d < 2 {
            return Err(Error::dim("layer_norm needs a trailing extent of at least 2"));
        }
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(Error::dim(format!("layer_norm: affine parameters must have {d} values")));
        }
        let rows = t.outer_len();
        let mut xhat = vec![0.0; t.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &t.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<Real>() / d as Real;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / d as Real;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for (o, v) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = xhat.clone();
        for row in out.chunks_mut(d) {
            for ((o, gv), bv) in row.iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        let out = Tensor::new(t.shape(), out)?;
        let needs = self.needs(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    // ---- losses ------------------------------------------------------------

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (b, c) = t.dims2()?;
        check_finite(t, "cross_entropy")?;
        if labels.len() != b {
            return Err(Error::dim(format!("{} labels for a batch of {b}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Index(format!("label {bad} outside 0..{c}")));
        }
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &t.data()[r * c..(r + 1) * c];
            let mx = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let z: Real = row.iter().map(|v| (v - mx).exp()).sum();
            for (p, v) in probs[r * c..(r + 1) * c].iter_mut().zip(row) {
                *p = (v - mx).exp() / z;
            }
            loss += -(row[label] - mx - z.ln());
        }
        let needs = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / b as Real),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            needs,
        ))
    }

    // ---- reductions ---------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let s = self.value(x).mean();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), needs)
    }

    /// Column means of a 2-D tensor, as a `1×d` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= r as Real);
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::new([1, c], out)?, Op::MeanRows(x), needs))
    }

    /// Mean over the trailing axis, which is dropped.
    pub fn mean_last(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.ndim() < 2 {
            return Err(Error::dim("mean_last needs at least two axes"));
        }
        let d = t.last_dim();
        let out: Vec<Real> = t.data().chunks(d).map(|r| r.iter().sum::<Real>() / d as Real).collect();
        let shape = t.shape()[..t.ndim() - 1].to_vec();
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MeanLast(x), needs))
    }

    // ---- shape ----------------------------------------------------------------

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let t = Tensor::concat_rows(&tensors)?;
        let needs = self.needs(parts);
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), needs))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x).slice_rows(start, len)?;
        let needs = self.needs(&[x]);
        Ok(self.push(t, Op::SliceRows { x, start }, needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::dim("nothing to concatenate"))?;
        let rows = self.value(*first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(Error::dim(format!("concat_cols: row mismatch {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let needs = self.needs(parts);
        Ok(self.push(Tensor::new([rows, total], out)?, Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        if len == 0 || start + len > c {
            return Err(Error::dim(format!("columns {start}..{} out of {c}", start + len)));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::new([r, len], out)?, Op::SliceCols { x, start }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(&[x]);
        Ok(self.push(t, Op::Reshape(x), needs))
    }

    // ---- convolution and pooling ----------------------------------------------

    /// Stride-1 convolution of `x: [Ci, T, H, W]` with `w: [Co, Ci, kt, kh, kw]`
    /// and bias `b: [Co]`, zero padding `padding` on each side.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, padding: [usize; 3]) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (xs, ws) = (tx.shape(), tw.shape());
        if xs.len() != 4 || ws.len() != 5 || ws[1] != xs[0] {
            return Err(Error::dim(format!("conv3d: input {xs:?} against kernel {ws:?}")));
        }
        if self.value(b).len() != ws[0] {
            return Err(Error::dim("conv3d: bias length must equal output channels"));
        }
        let geom = ConvGeom {
            in_channels: xs[0],
            out_channels: ws[0],
            input: [xs[1], xs[2], xs[3]],
            kernel: [ws[2], ws[3], ws[4]],
            padding,
        };
        if (0..3).any(|a| geom.input[a] + 2 * padding[a] < geom.kernel[a]) {
            return Err(Error::dim(format!("conv3d: kernel {:?} larger than padded input", geom.kernel)));
        }
        let cols = im2col(tx.data(), &geom);
        let [ot, oh, ow] = geom.output();
        let n = ot * oh * ow;
        let mut out = matmul(tw.data(), &cols, geom.out_channels, geom.patch_len(), n);
        for (row, bias) in out.chunks_mut(n).zip(self.value(b).data()) {
            row.iter_mut().for_each(|v| *v += bias);
        }
        let out = Tensor::new([geom.out_channels, ot, oh, ow], out)?;
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(out, Op::Conv3d { x, w, b, geom, cols }, needs))
    }

    /// Non-overlapping pooling over `[C, T, H, W]` with the given window;
    /// trailing remainders are dropped.
    pub fn pool3d(&mut self, x: Var, window: [usize; 3], kind: PoolKind) -> Result<Var> {
        let t = self.value(x);
        let s = t.shape();
        if s.len() != 4 {
            return Err(Error::dim(format!("pool3d expects [C, T, H, W], got {s:?}")));
        }
        let (c, dims) = (s[0], [s[1], s[2], s[3]]);
        let o: Vec<usize> = (0..3).map(|a| dims[a] / window[a]).collect();
        if o.iter().any(|&e| e == 0) {
            return Err(Error::dim(format!("pool3d window {window:?} exceeds input {dims:?}")));
        }
        let count = (window[0] * window[1] * window[2]) as Real;
        let mut out = Vec::with_capacity(c * o[0] * o[1] * o[2]);
        let mut argmax = Vec::new();
        let src = t.data();
        let idx = |ch: usize, tt: usize, hh: usize, ww: usize| ((ch * dims[0] + tt) * dims[1] + hh) * dims[2] + ww;
        for ch in 0..c {
            for a in 0..o[0] {
                for bb in 0..o[1] {
                    for cc in 0..o[2] {
                        let mut best = Real::NEG_INFINITY;
                        let mut best_i = 0;
                        let mut sum = 0.0;
                        for dt in 0..window[0] {
                            for dh in 0..window[1] {
                                for dw in 0..window[2] {
                                    let i = idx(ch, a * window[0] + dt, bb * window[1] + dh, cc * window[2] + dw);
                                    let v = src[i];
                                    sum += v;
                                    if v > best {
                                        best = v;
                                        best_i = i;
                                    }
                                }
                            }
                        }
                        match kind {
                            PoolKind::Max => {
                                out.push(best);
                                argmax.push(best_i);
                            }
                            PoolKind::Avg => out.push(sum / count),
                        }
                    }
                }
            }
        }
        let out = Tensor::new([c, o[0], o[1], o[2]], out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(
            out,
            Op::Pool3d {
                x,
                kind,
                window,
                argmax,
            },
            needs,
        ))
    }

    /// For `x: [C, T]`, splits the time axis into `windows` contiguous
    /// windows (`floor(i·T/n) .. ceil((i+1)·T/n)`) and returns, per channel and
    /// window, the window maximum plus the window mean: `[C, windows]`.
    pub fn window_max_mean(&mut self, x: Var, windows: usize) -> Result<Var> {
        let (c, t) = self.value(x).dims2()?;
        if windows == 0 || windows > t {
            return Err(Error::dim(format!("cannot pool {t} steps into {windows} windows")));
        }
        let bounds: Vec<(usize, usize)> = (0..windows)
            .map(|i| (i * t / windows, ((i + 1) * t).div_ceil(windows)))
            .collect();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * windows);
        let mut argmax = Vec::with_capacity(c * windows);
        for ch in 0..c {
            let row = &src[ch * t..(ch + 1) * t];
            for &(s, e) in &bounds {
                let (mut bi, mut bv) = (s, row[s]);
                for (j, &v) in row.iter().enumerate().take(e).skip(s + 1) {
                    if v > bv {
                        bv = v;
                        bi = j;
                    }
                }
                let mean = row[s..e].iter().sum::<Real>() / (e - s) as Real;
                out.push(bv + mean);
                argmax.push(ch * t + bi);
            }
        }
        let out = Tensor::new([c, windows], out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(out, Op::WindowMaxMean { x, argmax, bounds }, needs))
    }

    // ---- backward ----------------------------------------------------------------

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2()?;
                let n = tb.dims2()?.1;
                if self.wants(*a) {
                    let da = matmul_nt(gd, tb.data(), m, n, k);
                    self.acc(grads, *a, Tensor::new([m, k], da)?);
                }
                if self.wants(*b) {
                    let db = matmul_tn(ta.data(), gd, m, k, n);
                    self.acc(grads, *b, Tensor::new([k, n], db)?);
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2()?;
                let n = tb.dims2()?.0;
                if self.wants(*a) {
                    let da = matmul(gd, tb.data(), m, n, k);
                    self.acc(grads, *a, Tensor::new([m, k], da)?);
                }
                if self.wants(*b) {
                    let db = matmul_tn(gd, ta.data(), m, n, k);
                    self.acc(grads, *b, Tensor::new([n, k], db)?);
                }
            }
            Op::Transpose(a) => {
                self.acc(grads, *a, g.transpose2()?);
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = gd.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                    self.acc(grads, *a, Tensor::new(ta.shape(), d)?);
                }
                if self.wants(*b) {
                    let d = gd.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                    self.acc(grads, *b, Tensor::new(tb.shape(), d)?);
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.acc(grads, *a, g.map(|v| v * s));
            }
            Op::AddBias(x, bias) => {
                self.acc(grads, *x, g.clone());
                if self.wants(*bias) {
                    let tb = self.value(*bias);
                    let d = tb.len();
                    let mut db = vec![0.0; d];
                    for row in gd.chunks(d) {
                        for (o, v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.acc(grads, *bias, Tensor::new(tb.shape(), db)?);
                }
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let d = gd.iter().zip(tx.data()).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                self.acc(grads, *x, Tensor::new(tx.shape(), d)?);
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let d = gd.iter().zip(tx.data()).map(|(g, &v)| g * gelu_grad(v)).collect();
                self.acc(grads, *x, Tensor::new(tx.shape(), d)?);
            }
            Op::Softmax { x, inner, axis_len } => {
                let y = node.value.data();
                let (inner, axis_len) = (*inner, *axis_len);
                let outer = y.len() / (inner * axis_len);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * axis_len * inner + j * inner + i;
                        let dot: Real = (0..axis_len).map(|j| gd[at(j)] * y[at(j)]).sum();
                        for j in 0..axis_len {
                            dx[at(j)] = y[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                self.acc(grads, *x, Tensor::new(node.value.shape(), dx)?);
            }
            Op::LogSoftmax(x) => {
                let y = node.value.data();
                let d = node.value.last_dim();
                let mut dx = vec![0.0; y.len()];
                for ((dxr, yr), gr) in dx.chunks_mut(d).zip(y.chunks(d)).zip(gd.chunks(d)) {
                    let gs: Real = gr.iter().sum();
                    for ((o, yv), gv) in dxr.iter_mut().zip(yr).zip(gr) {
                        *o = gv - yv.exp() * gs;
                    }
                }
                self.acc(grads, *x, Tensor::new(node.value.shape(), dx)?);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = node.value.last_dim();
                let gv = self.value(*gain).data();
                if self.wants(*gain) || self.wants(*bias) {
                    let mut dg = vec![0.0; d];
                    let mut db = vec![0.0; d];
                    for (gr, xr) in gd.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dg[j] += gr[j] * xr[j];
                            db[j] += gr[j];
                        }
                    }
                    let gshape = self.shape(*gain).to_vec();
                    let bshape = self.shape(*bias).to_vec();
                    self.acc(grads, *gain, Tensor::new(gshape, dg)?);
                    self.acc(grads, *bias, Tensor::new(bshape, db)?);
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; gd.len()];
                    for (r, ((dxr, gr), xr)) in dx.chunks_mut(d).zip(gd.chunks(d)).zip(xhat.chunks(d)).enumerate() {
                        let dxhat: Vec<Real> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let m1 = dxhat.iter().sum::<Real>() / d as Real;
                        let m2 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<Real>() / d as Real;
                        for j in 0..d {
                            dxr[j] = inv_std[r] * (dxhat[j] - m1 - xr[j] * m2);
                        }
                    }
                    self.acc(grads, *x, Tensor::new(node.value.shape(), dx)?);
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let (b, c) = self.value(*logits).dims2()?;
                let scale = gd[0] / b as Real;
                let mut dz = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    dz[r * c + l] -= 1.0;
                }
                dz.iter_mut().for_each(|v| *v *= scale);
                self.acc(grads, *logits, Tensor::new([b, c], dz)?);
            }
            Op::Sum(x) => {
                let s = gd[0];
                let t = self.value(*x);
                self.acc(grads, *x, Tensor::full(t.shape(), s)?);
            }
            Op::Mean(x) => {
                let t = self.value(*x);
                let s = gd[0] / t.len() as Real;
                self.acc(grads, *x, Tensor::full(t.shape(), s)?);
            }
            Op::MeanRows(x) => {
                let (r, c) = self.value(*x).dims2()?;
                let mut dx = Vec::with_capacity(r * c);
                for _ in 0..r {
                    dx.extend(gd.iter().map(|v| v / r as Real));
                }
                self.acc(grads, *x, Tensor::new([r, c], dx)?);
            }
            Op::MeanLast(x) => {
                let t = self.value(*x);
                let d = t.last_dim();
                let mut dx = Vec::with_capacity(t.len());
                for v in gd {
                    dx.extend(std::iter::repeat_n(v / d as Real, d));
                }
                self.acc(grads, *x, Tensor::new(t.shape(), dx)?);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let t = self.value(p);
                    let n = t.len();
                    if self.wants(p) {
                        self.acc(grads, p, Tensor::new(t.shape(), gd[off..off + n].to_vec())?);
                    }
                    off += n;
                }
            }
            Op::SliceRows { x, start } => {
                let t = self.value(*x);
                let c = t.last_dim();
                let mut dx = vec![0.0; t.len()];
                dx[start * c..start * c + gd.len()].copy_from_slice(gd);
                self.acc(grads, *x, Tensor::new(t.shape(), dx)?);
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2()?;
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).dims2()?.1;
                    if self.wants(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&gd[r * total + off..r * total + off + w]);
                        }
                        self.acc(grads, p, Tensor::new([rows, w], d)?);
                    }
                    off += w;
                }
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.value(*x).dims2()?;
                let len = node.value.last_dim();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + len].copy_from_slice(&gd[i * len..(i + 1) * len]);
                }
                self.acc(grads, *x, Tensor::new([r, c], dx)?);
            }
            Op::Reshape(x) => {
                let shape = self.shape(*x).to_vec();
                self.acc(grads, *x, g.clone().reshape(shape)?);
            }
            Op::Conv3d { x, w, b, geom, cols } => {
                let [ot, oh, ow] = geom.output();
                let n = ot * oh * ow;
                let k = geom.patch_len();
                let co = geom.out_channels;
                if self.wants(*w) {
                    let dw = matmul_nt(gd, cols, co, n, k);
                    let shape = self.shape(*w).to_vec();
                    self.acc(grads, *w, Tensor::new(shape, dw)?);
                }
                if self.wants(*b) {
                    let db: Vec<Real> = gd.chunks(n).map(|r| r.iter().sum()).collect();
                    self.acc(grads, *b, Tensor::new([co], db)?);
                }
                if self.wants(*x) {
                    let dcols = matmul_tn(self.value(*w).data(), gd, co, k, n);
                    let dx = col2im(&dcols, geom);
                    let shape = self.shape(*x).to_vec();
                    self.acc(grads, *x, Tensor::new(shape, dx)?);
                }
            }
            Op::Pool3d { x, kind, window, argmax } => {
                let t = self.value(*x);
                let mut dx = vec![0.0; t.len()];
                match kind {
                    PoolKind::Max => {
                        for (&i, v) in argmax.iter().zip(gd) {
                            dx[i] += v;
                        }
                    }
                    PoolKind::Avg => {
                        let s = t.shape();
                        let dims = [s[1], s[2], s[3]];
                        let os = node.value.shape();
                        let count = (window[0] * window[1] * window[2]) as Real;
                        let mut oi = 0;
                        for ch in 0..s[0] {
                            for a in 0..os[1] {
                                for bb in 0..os[2] {
                                    for cc in 0..os[3] {
                                        let gv = gd[oi] / count;
                                        oi += 1;
                                        for dt in 0..window[0] {
                                            for dh in 0..window[1] {
                                                for dw in 0..window[2] {
                                                    let i = ((ch * dims[0] + a * window[0] + dt) * dims[1]
                                                        + bb * window[1]
                                                        + dh)
                                                        * dims[2]
                                                        + cc * window[2]
                                                        + dw;
                                                    dx[i] += gv;
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                self.acc(grads, *x, Tensor::new(t.shape(), dx)?);
            }
            Op::WindowMaxMean { x, argmax, bounds } => {
                let t = self.value(*x);
                let (c, steps) = t.dims2()?;
                let n = bounds.len();
                let mut dx = vec![0.0; t.len()];
                for ch in 0..c {
                    for (wi, &(s, e)) in bounds.iter().enumerate() {
                        let gv = gd[ch * n + wi];
                        dx[argmax[ch * n + wi]] += gv;
                        let share = gv / (e - s) as Real;
                        for v in &mut dx[ch * steps + s..ch * steps + e] {
                            *v += share;
                        }
                    }
                }
                self.acc(grads, *x, Tensor::new(t.shape(), dx)?);
            }
        }
        Ok(())
    }
}

fn im2col(x: &[Real], geom: &ConvGeom) -> Vec<Real> {
    let [it, ih, iw] = geom.input;
    let [kt, kh, kw] = geom.kernel;
    let [pt, ph, pw] = geom.padding;
    let [ot, oh, ow] = geom.output();
    let n = ot * oh * ow;
    let mut cols = vec![0.0; geom.patch_len() * n];
    let mut row = 0;
    for c in 0..geom.in_channels {
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let dst = &mut cols[row * n..(row + 1) * n];
                    let mut j = 0;
                    for t in 0..ot {
                        let st = (t + dt) as isize - pt as isize;
                        for h in 0..oh {
                            let sh = (h + dh) as isize - ph as isize;
                            let valid_th = st >= 0 && (st as usize) < it && sh >= 0 && (sh as usize) < ih;
                            let base = if valid_th {
                                ((c * it + st as usize) * ih + sh as usize) * iw
                            } else {
                                0
                            };
                            for w in 0..ow {
                                let sw = (w + dw) as isize - pw as isize;
                                if valid_th && sw >= 0 && (sw as usize) < iw {
                                    dst[j] = x[base + sw as usize];
                                }
                                j += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[Real], geom: &ConvGeom) -> Vec<Real> {
    let [it, ih, iw] = geom.input;
    let [kt, kh, kw] = geom.kernel;
    let [pt, ph, pw] = geom.padding;
    let [ot, oh, ow] = geom.output();
    let n = ot * oh * ow;
    let mut x = vec![0.0; geom.in_channels * it * ih * iw];
    let mut row = 0;
    for c in 0..geom.in_channels {
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let src = &cols[row * n..(row + 1) * n];
                    let mut j = 0;
                    for t in 0..ot {
                        let st = (t + dt) as isize - pt as isize;
                        for h in 0..oh {
                            let sh = (h + dh) as isize - ph as isize;
                            let valid_th = st >= 0 && (st as usize) < it && sh >= 0 && (sh as usize) < ih;
                            for w in 0..ow {
                                let sw = (w + dw) as isize - pw as isize;
                                if valid_th && sw >= 0 && (sw as usize) < iw {
                                    x[((c * it + st as usize) * ih + sh as usize) * iw + sw as usize] += src[j];
                                }
                                j += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    x
}

/// Gradients of one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to a differentiable leaf or parameter node.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients keyed by parameter, sized for `store`. Parameters the loss
    /// does not reach get `None` (treated as zero).
    pub fn param_grads(&self, graph: &Graph, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::empty(store.len());
        for (&id, &v) in &graph.params {
            if id.index() < store.len() {
                out.grads[id.index()] = self.grads[v.0].clone();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{check_gradients, max_rel_error};
    use crate::rng;
    use rand::Rng as _;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let a = rand_tensor(&[3, 3], 1);
        let i = g.input(Tensor::eye(3).unwrap());
        let x = g.input(a.clone());
        let y = g.matmul(i, x).unwrap();
        assert_eq!(g.value(y), &a);
    }

    #[test]
    fn zero_matmul() {
        let mut g = Graph::new();
        let z = g.input(Tensor::zeros([2, 3]).unwrap());
        let b = g.input(rand_tensor(&[3, 4], 2));
        let y = g.matmul(z, b).unwrap();
        assert_eq!(g.shape(y), &[2, 4]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros([2, 3]).unwrap());
        let b = g.input(Tensor::zeros([2, 3]).unwrap());
        assert!(matches!(g.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new([2], vec![0.0, 0.0]).unwrap());
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.input(Tensor::full([5], 3.7).unwrap());
        let y = g.softmax(x, 0).unwrap();
        assert!(g.value(y).data().iter().all(|v| (v - 0.2).abs() < 1e-15));

        let x = g.input(Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = g.softmax(x, 0).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in g.value(y).data().iter().enumerate() {
            let oracle = ((i + 1) as f64).exp() / z;
            assert!((*v as f64 - oracle).abs() < 1e-12);
        }
        let expected = [0.0900, 0.2447, 0.6652];
        for (v, e) in g.value(y).data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new([2], vec![0.0, Real::NAN]).unwrap());
        assert!(matches!(g.softmax(x, 0), Err(Error::Numeric(_))));
    }

    #[test]
    fn softmax_along_leading_axis() {
        let mut g = Graph::new();
        let x = g.input(rand_tensor(&[4, 3], 9));
        let y = g.softmax(x, 0).unwrap();
        let v = g.value(y);
        for j in 0..3 {
            let s: Real = (0..4).map(|i| v.at2(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::new();
        let gain = g.input(Tensor::ones([4]).unwrap());
        let bias = g.input(Tensor::zeros([4]).unwrap());

        let x = g.input(Tensor::new([1, 4], vec![2.0; 4]).unwrap());
        let y = g.layer_norm(x, gain, bias).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));

        // A row that is already zero-mean and unit-variance passes through
        // up to the epsilon inside the square root.
        let x = g.input(Tensor::new([1, 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap());
        let y = g.layer_norm(x, gain, bias).unwrap();
        assert!(g.value(y).max_abs_diff(g.value(x)) < 1e-5);

        let row = rand_tensor(&[1, 6], 3);
        let mean = row.data().iter().sum::<Real>() / 6.0;
        let var = row.data().iter().map(|v| (v - mean).powi(2)).sum::<Real>() / 6.0;
        let gain = g.input(Tensor::ones([6]).unwrap());
        let bias = g.input(Tensor::zeros([6]).unwrap());
        let x = g.input(row.clone());
        let y = g.layer_norm(x, gain, bias).unwrap();
        for (o, v) in g.value(y).data().iter().zip(row.data()) {
            let oracle = (v - mean) / (var + 1e-5).sqrt();
            assert!((o - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros([1, 4]).unwrap());
        let l = g.cross_entropy(x, &[2]).unwrap();
        assert!((g.value(l).data()[0] - (4.0 as Real).ln()).abs() < 1e-12);

        let x = g.input(Tensor::new([1, 3], vec![1e3, 0.0, 0.0]).unwrap());
        let l = g.cross_entropy(x, &[0]).unwrap();
        assert!(g.value(l).data()[0].abs() < 1e-12);

        let x = g.input(Tensor::new([1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let l = g.cross_entropy(x, &[2]).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        let oracle = -(3.0f64.exp() / z).ln();
        assert!((g.value(l).data()[0] as f64 - oracle).abs() < 1e-12);
        assert!((g.value(l).data()[0] - 0.4076).abs() < 1e-3);

        assert!(matches!(g.cross_entropy(x, &[3]), Err(Error::Index(_))));
    }

    #[test]
    fn backward_simple_cases() {
        let mut g = Graph::new();
        let t = rand_tensor(&[2, 3], 4);
        let x = g.leaf(t.clone());
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert!(grads.wrt(x).unwrap().data().iter().all(|&v| v == 1.0));

        let mut g = Graph::new();
        let x = g.leaf(t.clone());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        for (d, v) in grads.wrt(x).unwrap().data().iter().zip(t.data()) {
            assert_eq!(*d, 2.0 * v);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros([2]).unwrap());
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(3x) + sum(x⊙x) → dloss/dx = 3 + 2x
        let t = rand_tensor(&[4], 5);
        let mut g = Graph::new();
        let x = g.leaf(t.clone());
        let a = g.scale(x, 3.0);
        let b = g.mul(x, x).unwrap();
        let sa = g.sum(a);
        let sb = g.sum(b);
        let l = g.add(sa, sb).unwrap();
        let grads = g.backward(l).unwrap();
        for (d, v) in grads.wrt(x).unwrap().data().iter().zip(t.data()) {
            assert!((d - (3.0 + 2.0 * v)).abs() < 1e-14);
        }
    }

    #[test]
    fn unreachable_param_gets_no_grad() {
        let mut store = ParamStore::new();
        let used = store.add("used", rand_tensor(&[3], 6));
        let unused = store.add("unused", rand_tensor(&[3], 7));
        let mut g = Graph::new();
        let u = g.param(&store, used);
        let _ = g.param(&store, unused);
        let s = g.sum(u);
        let pg = g.backward(s).unwrap().param_grads(&g, &store);
        assert!(pg.get(used).is_some());
        assert!(pg.get(unused).is_none());
    }

    fn check(f: impl Fn(&mut Graph, &[Var]) -> Result<Var>, inputs: Vec<Tensor>) {
        let report = check_gradients(&inputs, |g, vars| f(g, vars)).unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "max relative error {} at input {} index {}",
            report.max_rel_error,
            report.worst_input,
            report.worst_index
        );
    }

    #[test]
    fn finite_differences_every_op() {
        let a = || rand_tensor(&[3, 4], 11);
        let b = || rand_tensor(&[4, 5], 12);
        check(|g, v| { let y = g.matmul(v[0], v[1])?; Ok(g.sum(y)) }, vec![a(), b()]);
        check(
            |g, v| { let y = g.matmul_nt(v[0], v[1])?; let y = g.mul(y, y)?; Ok(g.sum(y)) },
            vec![a(), rand_tensor(&[2, 4], 13)],
        );
        check(|g, v| { let y = g.transpose(v[0])?; let y = g.mul(y, y)?; Ok(g.sum(y)) }, vec![a()]);
        check(|g, v| { let y = g.sub(v[0], v[1])?; let y = g.mul(y, v[0])?; Ok(g.sum(y)) }, vec![a(), rand_tensor(&[3, 4], 14)]);
        check(|g, v| { let y = g.add_bias(v[0], v[1])?; let y = g.mul(y, y)?; Ok(g.mean(y)) }, vec![a(), rand_tensor(&[4], 15)]);
        check(|g, v| { let y = g.relu(v[0]); let y = g.mul(y, y)?; Ok(g.sum(y)) }, vec![a()]);
        check(|g, v| { let y = g.gelu(v[0]); let y = g.mul(y, v[0])?; Ok(g.sum(y)) }, vec![a()]);
        let w = rand_tensor(&[3, 4], 16);
        check(
            move |g, v| {
                let y = g.softmax(v[0], 1)?;
                let c = g.input(w.clone());
                let y = g.mul(y, c)?;
                Ok(g.sum(y))
            },
            vec![a()],
        );
        let w = rand_tensor(&[3, 4], 17);
        check(
            move |g, v| {
                let y = g.softmax(v[0], 0)?;
                let c = g.input(w.clone());
                let y = g.mul(y, c)?;
                Ok(g.sum(y))
            },
            vec![a()],
        );
        let w = rand_tensor(&[3, 4], 18);
        check(
            move |g, v| {
                let y = g.log_softmax(v[0])?;
                let c = g.input(w.clone());
                let y = g.mul(y, c)?;
                Ok(g.sum(y))
            },
            vec![a()],
        );
        let w = rand_tensor(&[3, 4], 19);
        check(
            move |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2])?;
                let c = g.input(w.clone());
                let y = g.mul(y, c)?;
                Ok(g.sum(y))
            },
            vec![a(), rand_tensor(&[4], 20), rand_tensor(&[4], 21)],
        );
        check(|g, v| g.cross_entropy(v[0], &[1, 3, 0]), vec![a()]);
        check(|g, v| { let y = g.mean_rows(v[0])?; let y = g.mul(y, y)?; Ok(g.sum(y)) }, vec![a()]);
        check(|g, v| { let y = g.mean_last(v[0])?; let y = g.mul(y, y)?; Ok(g.sum(y)) }, vec![a()]);
        check(
            |g, v| {
                let y = g.concat_rows(&[v[0], v[1]])?;
                let s = g.slice_rows(y, 1, 3)?;
                let s = g.mul(s, s)?;
                Ok(g.sum(s))
            },
            vec![a(), rand_tensor(&[2, 4], 22)],
        );
        check(
            |g, v| {
                let y = g.concat_cols(&[v[0], v[1]])?;
                let s = g.slice_cols(y, 2, 4)?;
                let s = g.mul(s, s)?;
                Ok(g.sum(s))
            },
            vec![a(), rand_tensor(&[3, 2], 23)],
        );
        check(|g, v| { let y = g.reshape(v[0], &[2, 6])?; let y = g.mul(y, y)?; Ok(g.sum(y)) }, vec![a()]);
        check(
            |g, v| {
                let y = g.conv3d(v[0], v[1], v[2], [1, 1, 0])?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            vec![rand_tensor(&[2, 3, 4, 5], 24), rand_tensor(&[3, 2, 3, 3, 2], 25), rand_tensor(&[3], 26)],
        );
        check(
            |g, v| {
                let y = g.pool3d(v[0], [1, 2, 2], PoolKind::Max)?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            vec![rand_tensor(&[2, 2, 4, 4], 27)],
        );
        check(
            |g, v| {
                let y = g.pool3d(v[0], [2, 2, 1], PoolKind::Avg)?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            vec![rand_tensor(&[2, 4, 4, 3], 28)],
        );
        check(
            |g, v| {
                let y = g.window_max_mean(v[0], 3)?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            vec![rand_tensor(&[2, 7], 29)],
        );
    }

    #[test]
    fn conv_matches_direct_sum() {
        let x = rand_tensor(&[2, 1, 5, 4], 30);
        let w = rand_tensor(&[3, 2, 1, 3, 3], 31);
        let b = rand_tensor(&[3], 32);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.input(x.clone()), g.input(w.clone()), g.input(b.clone()));
        let y = g.conv3d(xv, wv, bv, [0, 1, 1]).unwrap();
        let out = g.value(y);
        assert_eq!(out.shape(), &[3, 1, 5, 4]);
        for co in 0..3 {
            for h in 0..5 {
                for wi in 0..4 {
                    let mut s = b.data()[co];
                    for ci in 0..2 {
                        for dh in 0..3 {
                            for dw in 0..3 {
                                let (ih, iw) = (h as isize + dh as isize - 1, wi as isize + dw as isize - 1);
                                if ih < 0 || iw < 0 || ih >= 5 || iw >= 4 {
                                    continue;
                                }
                                s += w.data()[((co * 2 + ci) * 3 + dh) * 3 + dw]
                                    * x.data()[(ci * 5 + ih as usize) * 4 + iw as usize];
                            }
                        }
                    }
                    assert!((out.data()[(co * 5 + h) * 4 + wi] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn window_pool_hand_values() {
        // 2×2 map (one channel, two steps → one window): max + mean.
        let mut g = Graph::new();
        let x = g.input(Tensor::new([2, 2], vec![1.0, 3.0, -2.0, 4.0]).unwrap());
        let y = g.window_max_mean(x, 1).unwrap();
        assert_eq!(g.value(y).data(), &[3.0 + 2.0, 4.0 + 1.0]);
        let _ = max_rel_error;
    }
}
