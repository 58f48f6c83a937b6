//! Video frontend: native clips, frame sampling, visual corruption and
//! ViT-style patch embedding.

mod io;
mod patch;

pub use io::{load_frame_dir, save_frame_dir};
pub use patch::{embed_patches, patchify, reassemble};

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, Real, Tensor};
use crate::rng::Rng;

/// Upper bound on the corruption noise variance.
pub const MAX_NOISE_VARIANCE: f64 = 0.2;

/// A clip's full frame sequence, stored as 8-bit RGB, `[frames, 3, H, W]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoClip {
    pixels: Vec<u8>,
    frames: usize,
    height: usize,
    width: usize,
}

impl VideoClip {
    pub fn new(pixels: Vec<u8>, frames: usize, height: usize, width: usize) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::input("video clip needs at least one non-empty frame"));
        }
        if pixels.len() != frames * 3 * height * width {
            return Err(Error::dim(format!(
                "{} pixel values for {frames}×3×{height}×{width}",
                pixels.len()
            )));
        }
        Ok(Self { pixels, frames, height, width })
    }

    /// Quantises a `[0, 1]` frame tensor `[n, 3, H, W]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::dim(format!("expected [n, 3, H, W], got {s:?}")));
        }
        let pixels = t.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self::new(pixels, s[0], s[2], s[3])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    fn frame_len(&self) -> usize {
        3 * self.height * self.width
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.frame_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Every frame, in order.
    pub fn all_frames(&self) -> FrameStack {
        self.select(&(0..self.frames).collect::<Vec<_>>())
            .expect("indices are in range")
    }

    pub fn select(&self, indices: &[usize]) -> Result<FrameStack> {
        if indices.is_empty() {
            return Err(Error::input("no frames selected"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.frames) {
            return Err(Error::Index(format!("frame {bad} of {}", self.frames)));
        }
        let mut data = Vec::with_capacity(indices.len() * self.frame_len());
        for &i in indices {
            data.extend(self.frame(i).iter().map(|&p| p as Real / 255.0));
        }
        Ok(FrameStack {
            frames: Tensor::new([indices.len(), 3, self.height, self.width], data)?,
            indices: indices.to_vec(),
        })
    }

    /// Area-average downscaling by an integer factor.
    pub fn downscale(&self, factor: usize) -> Result<VideoClip> {
        if factor == 0 || self.height % factor != 0 || self.width % factor != 0 {
            return Err(Error::dim(format!(
                "{}×{} is not divisible by {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let area = (factor * factor) as u32;
        let mut out = Vec::with_capacity(self.frames * 3 * h * w);
        for plane in self.pixels.chunks(self.height * self.width) {
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0u32;
                    for dy in 0..factor {
                        let row = (y * factor + dy) * self.width + x * factor;
                        s += plane[row..row + factor].iter().map(|&p| p as u32).sum::<u32>();
                    }
                    out.push(((s + area / 2) / area) as u8);
                }
            }
        }
        VideoClip::new(out, self.frames, h, w)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let t = Tensor::new(
            [self.frames, 3, self.height, self.width],
            self.pixels.iter().map(|&p| p as Real).collect(),
        )?;
        Ok(Checkpoint::new("frames", serde_json::json!({}), vec![("frames".into(), t)]))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_tag("frames")?;
        let t = ck
            .get("frames")
            .ok_or_else(|| Error::Checkpoint("frame pack has no `frames` tensor".into()))?;
        let s = t.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::Checkpoint(format!("frame pack shape {s:?}")));
        }
        let pixels = t.data().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        Self::new(pixels, s[0], s[2], s[3])
    }
}

/// Selected frames as reals in `[0, 1]`, `[N_f, 3, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    pub frames: Tensor,
    pub indices: Vec<usize>,
}

impl FrameStack {
    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[3]
    }

    pub fn frame(&self, i: usize) -> &[Real] {
        let n = self.frames.len() / self.len();
        &self.frames.data()[i * n..(i + 1) * n]
    }
}

/// Draws `n_f` distinct frames uniformly without replacement, in temporal order.
pub fn sample_frames(clip: &VideoClip, n_f: usize, rng: &mut Rng) -> Result<FrameStack> {
    if n_f == 0 || n_f > clip.frames {
        return Err(Error::input(format!("cannot sample {n_f} of {} frames", clip.frames)));
    }
    let mut idx = if n_f == clip.frames {
        (0..n_f).collect()
    } else {
        index::sample(rng, clip.frames, n_f).into_vec()
    };
    idx.sort_unstable();
    clip.select(&idx)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualCorruption {
    /// Multiplier in `(0, 1]`.
    pub darkness: f64,
    /// Gaussian noise variance in `[0, 0.2]`.
    pub variance: f64,
}

impl Default for VisualCorruption {
    fn default() -> Self {
        Self { darkness: 1.0, variance: 0.0 }
    }
}

impl VisualCorruption {
    pub fn validate(&self) -> Result<()> {
        if !(self.darkness > 0.0 && self.darkness <= 1.0) {
            return Err(Error::config(format!("darkness factor {} outside (0, 1]", self.darkness)));
        }
        if !(0.0..=MAX_NOISE_VARIANCE).contains(&self.variance) {
            return Err(Error::config(format!(
                "noise variance {} outside [0, {MAX_NOISE_VARIANCE}]",
                self.variance
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.darkness == 1.0 && self.variance == 0.0
    }
}

/// Zero-mean Gaussian samples of the given variance.
pub fn noise_field(n: usize, variance: f64, rng: &mut Rng) -> Vec<Real> {
    if variance == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("variance is finite and positive");
    (0..n).map(|_| normal.sample(rng) as Real).collect()
}

/// Darkens, adds Gaussian noise, and clips to `[0, 1]`.
pub fn corrupt_frames(stack: &FrameStack, c: &VisualCorruption, rng: &mut Rng) -> Result<FrameStack> {
    c.validate()?;
    if c.is_identity() {
        return Ok(stack.clone());
    }
    let noise = noise_field(stack.frames.len(), c.variance, rng);
    let dark = c.darkness as Real;
    let mut out = stack.clone();
    for (p, n) in out.frames.data_mut().iter_mut().zip(noise) {
        *p = (*p * dark + n).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Per-channel multiplicative jitter drawn from `1 ± amount`, clipped to `[0, 1]`.
pub fn color_jitter(stack: &FrameStack, amount: f64, rng: &mut Rng) -> FrameStack {
    use rand::Rng as _;
    let gains: Vec<Real> = (0..3).map(|_| rng.random_range(1.0 - amount..=1.0 + amount) as Real).collect();
    let plane = stack.height() * stack.width();
    let mut out = stack.clone();
    for (i, chunk) in out.frames.data_mut().chunks_mut(plane).enumerate() {
        let g = gains[i % 3];
        chunk.iter_mut().for_each(|p| *p = (*p * g).clamp(0.0, 1.0));
    }
    out
}
