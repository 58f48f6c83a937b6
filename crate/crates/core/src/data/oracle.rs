//! Labelling oracle for synthetic clips.
//!
//! Two quantities are measured from the clip itself. Blob dispersion is the
//! intensity-weighted RMS distance of bright pixels from their centroid,
//! averaged over frames. The burst rate is the burst-band energy in excess of
//! the background, divided by the energy of one burst; the background in the
//! band is estimated from a band three times higher, which for 1/f noise
//! carries the same power. Each quantity is mapped to fractional class units
//! by linear interpolation through the per-class reference values, the two
//! are blended 3:1 (dispersion:rate), and the result is rounded to the
//! nearest class with exact halves going to the lower class.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::data::synth::SynthParams;
use crate::data::{ClipRecord, Origin};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::label::Intensity;
use crate::video::VideoClip;

pub const DISPERSION_WEIGHT: f64 = 0.75;

/// Pixels above the background by less than this (in `[0, 1]` units) are ignored.
const BRIGHT_THRESHOLD: f64 = 0.15;

/// Mean intensity-weighted RMS blob distance from the centroid, in pixels
/// rescaled to a 64-pixel frame.
pub fn measure_dispersion(video: &VideoClip) -> f64 {
    let (h, w) = (video.height(), video.width());
    let plane = h * w;
    let scale = 64.0 / w as f64;
    let mut total = 0.0;
    for f in 0..video.frames() {
        let px = video.frame(f);
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        let weights: Vec<f64> = (0..plane)
            .map(|i| {
                let gray = (0..3).map(|c| px[c * plane + i] as f64).sum::<f64>() / (3.0 * 255.0);
                (gray - 0.09 - BRIGHT_THRESHOLD).max(0.0)
            })
            .collect();
        for (i, &wt) in weights.iter().enumerate() {
            sw += wt;
            sx += wt * (i % w) as f64;
            sy += wt * (i / w) as f64;
        }
        if sw == 0.0 {
            continue;
        }
        let (mx, my) = (sx / sw, sy / sw);
        let ss: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, &wt)| wt * (((i % w) as f64 - mx).powi(2) + ((i / w) as f64 - my).powi(2)))
            .sum();
        total += (ss / sw).sqrt() * scale;
    }
    total / video.frames() as f64
}

/// Estimated bursts per second.
pub fn estimate_burst_rate(w: &Waveform, p: &SynthParams) -> f64 {
    let n = w.samples.len();
    let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let hz = w.sample_rate as f64 / n as f64;
    let band_energy = |lo: f64, hi: f64| -> f64 {
        let (a, b) = ((lo / hz).ceil() as usize, (hi / hz).floor() as usize);
        2.0 * buf[a..=b.min(n / 2)].iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64
    };
    let (lo, hi) = (2000.0, 6000.0);
    let excess = band_energy(lo, hi) - band_energy(3.25 * lo, 3.25 * hi);
    let window = crate::dsp::mel::hann(p.burst_len());
    let per_burst = p.burst_amplitude.powi(2) * window.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / 2.0;
    (excess / per_burst).max(0.0) / w.duration_secs()
}

/// Maps `x` to fractional class units through `refs` (monotone, either direction).
fn class_units(x: f64, refs: &[f64; 4]) -> f64 {
    let up = refs[3] > refs[0];
    let before = |a: f64, b: f64| if up { a <= b } else { a >= b };
    if before(x, refs[0]) {
        return 0.0;
    }
    for i in 0..3 {
        if before(x, refs[i + 1]) {
            return i as f64 + (x - refs[i]) / (refs[i + 1] - refs[i]);
        }
    }
    3.0
}

/// Reference dispersion a clip of each class measures as.
pub fn reference_dispersion(p: &SynthParams) -> [f64; 4] {
    let s2 = p.blob_sigma * p.blob_sigma * (64.0 / p.image as f64).powi(2);
    p.dispersion.map(|r| {
        let r = r * 64.0 / p.image as f64;
        (1.03 * r * r + 2.0 * s2).sqrt()
    })
}

/// Label from measured dispersion (pixels at 64×64) and burst rate (per second).
pub fn oracle_from_measurements(dispersion: f64, rate: f64, p: &SynthParams) -> Intensity {
    let c_disp = class_units(dispersion, &reference_dispersion(p));
    let c_rate = class_units(rate, &p.burst_rate);
    let score = DISPERSION_WEIGHT * c_disp + (1.0 - DISPERSION_WEIGHT) * c_rate;
    let idx = (score - 0.5).ceil().clamp(0.0, 3.0) as usize;
    Intensity::from_index(idx).expect("clamped to a class index")
}

pub fn oracle_label(clip: &ClipRecord, p: &SynthParams) -> Result<Intensity> {
    if !matches!(clip.origin, Origin::Synthetic { .. }) {
        return Err(Error::Unsupported(format!("oracle labels apply to synthetic clips only ({})", clip.clip_id)));
    }
    Ok(oracle_from_measurements(measure_dispersion(&clip.frames), estimate_burst_rate(&clip.waveform, p), p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_units_interpolate() {
        let up = [0.0, 2.0, 8.0, 20.0];
        assert_eq!(class_units(-1.0, &up), 0.0);
        assert_eq!(class_units(1.0, &up), 0.5);
        assert_eq!(class_units(14.0, &up), 2.5);
        assert_eq!(class_units(99.0, &up), 3.0);
        let down = [22.0, 15.0, 9.0, 4.0];
        assert_eq!(class_units(12.0, &down), 1.5);
        assert_eq!(class_units(1.0, &down), 3.0);
    }

    #[test]
    fn exact_midpoints_go_down() {
        let p = SynthParams::default();
        let disp = reference_dispersion(&p);
        for k in 0..3 {
            let mid_d = (disp[k] + disp[k + 1]) / 2.0;
            let mid_r = (p.burst_rate[k] + p.burst_rate[k + 1]) / 2.0;
            assert_eq!(oracle_from_measurements(mid_d, mid_r, &p).index(), k);
        }
    }
}
