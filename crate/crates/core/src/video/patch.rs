use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, Tensor, Var};

/// Splits a `3×H×W` frame into non-overlapping `P×P` patches.
///
/// Patches are numbered row-major over the patch grid; inside a patch the
/// values are laid out channel-major, then row, then column
/// (`c·P² + y·P + x`). Output: `[(H/P)·(W/P), 3·P²]`.
pub fn patchify(frame: &[Real], height: usize, width: usize, p: usize) -> Result<Tensor> {
    if p == 0 || height % p != 0 || width % p != 0 {
        return Err(Error::dim(format!("{height}×{width} frame is not divisible into {p}×{p} patches")));
    }
    if frame.len() != 3 * height * width {
        return Err(Error::dim(format!("{} values for a 3×{height}×{width} frame", frame.len())));
    }
    let (gh, gw) = (height / p, width / p);
    let mut out = Vec::with_capacity(frame.len());
    for py in 0..gh {
        for px in 0..gw {
            for c in 0..3 {
                for y in 0..p {
                    let row = (c * height + py * p + y) * width + px * p;
                    out.extend_from_slice(&frame[row..row + p]);
                }
            }
        }
    }
    Tensor::new([gh * gw, 3 * p * p], out)
}

/// Inverse of [`patchify`].
pub fn reassemble(patches: &Tensor, height: usize, width: usize, p: usize) -> Result<Vec<Real>> {
    let (n, len) = patches.dims2()?;
    if p == 0 || height % p != 0 || width % p != 0 || n != (height / p) * (width / p) || len != 3 * p * p {
        return Err(Error::dim(format!("{n}×{len} patches do not tile a 3×{height}×{width} frame")));
    }
    let gw = width / p;
    let mut frame = vec![0.0; 3 * height * width];
    for (i, patch) in patches.data().chunks(len).enumerate() {
        let (py, px) = (i / gw, i % gw);
        for c in 0..3 {
            for y in 0..p {
                let row = (c * height + py * p + y) * width + px * p;
                frame[row..row + p].copy_from_slice(&patch[(c * p + y) * p..(c * p + y + 1) * p]);
            }
        }
    }
    Ok(frame)
}

/// `[class + pos₀; patches·projection + pos₁..]`, shape `[N+1, d]`.
pub fn embed_patches(g: &mut Graph, patches: Var, projection: Var, pos: Var, class_token: Var) -> Result<Var> {
    let n = g.shape(patches)[0];
    if g.shape(pos)[0] != n + 1 {
        return Err(Error::dim(format!(
            "{} position embeddings for {n} patches plus a class token",
            g.shape(pos)[0]
        )));
    }
    let projected = g.matmul(patches, projection)?;
    let tokens = g.concat_rows(&[class_token, projected])?;
    g.add(tokens, pos)
}
