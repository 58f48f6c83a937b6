//! Spectral pooling along time.
//!
//! Each mel row is transformed with a DFT over its `T` frames, the
//! `n = floor(k·T)` lowest-|frequency| coefficients are kept, and an `n`-point
//! inverse DFT produces the compressed row. For even `n` the single Nyquist
//! slot takes the average of the `+n/2` and `−n/2` coefficients, which keeps
//! the result Hermitian (hence real). The output is scaled by `1/T`, so the
//! DC term, and with it every row's time-mean, is preserved exactly; when
//! `k·T` is an integer this is the same as scaling the normalised IDFT by `k`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dsp::MelFeature;
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Output frame count for `frames` inputs at compression `k`.
pub fn pooled_len(frames: usize, k: f64) -> Result<usize> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::config(format!("compression must lie in (0, 1], got {k}")));
    }
    let n = (k * frames as f64 + 1e-9).floor() as usize;
    if n == 0 {
        return Err(Error::config(format!("compression {k} leaves no frames out of {frames}")));
    }
    Ok(n.min(frames))
}

/// Compresses the time axis of `mel` to `floor(k·T)` frames.
pub fn simpf_pool(mel: &MelFeature, k: f64) -> Result<MelFeature> {
    let (t, m) = mel.values.dims2()?;
    let n = pooled_len(t, k)?;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(t);
    let inv = planner.plan_fft_inverse(n);
    let half = n / 2;
    let mut out = vec![0.0 as Real; n * m];
    let mut spec = vec![Complex::new(0.0, 0.0); t];
    let mut crop = vec![Complex::new(0.0, 0.0); n];
    for bin in 0..m {
        for (i, s) in spec.iter_mut().enumerate() {
            *s = Complex::new(mel.values.at2(i, bin) as f64, 0.0);
        }
        fwd.process(&mut spec);
        for (j, c) in crop.iter_mut().enumerate() {
            *c = if n % 2 == 0 && j == half {
                (spec[half] + spec[t - half]) * 0.5
            } else if j <= half {
                spec[j]
            } else {
                spec[t - (n - j)]
            };
        }
        inv.process(&mut crop);
        for (j, c) in crop.iter().enumerate() {
            debug_assert!(c.im.abs() < 1e-6 * (1.0 + c.re.abs()) * t as f64);
            out[j * m + bin] = (c.re / t as f64) as Real;
        }
    }
    Ok(MelFeature {
        values: Tensor::new([n, m], out)?,
        compression: mel.compression * n as f64 / t as f64,
    })
}
