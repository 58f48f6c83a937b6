//! Seeded synthetic audio-visual clips with class-dependent structure.
//!
//! Audio: pink background noise plus Poisson-timed, Hann-windowed bursts of
//! band-limited noise. Video: bright Gaussian blobs orbiting a common centre; the orbit
//! radius shrinks and the speed grows with intensity.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::label::Intensity;
use crate::numerics::Real;
use crate::rng::Rng;
use crate::video::VideoClip;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Bursts per second, per class.
    pub burst_rate: [f64; 4],
    pub blob_count: usize,
    /// Orbit radius in pixels (at 64×64), per class.
    pub dispersion: [f64; 4],
    /// Blob displacement in pixels per frame, per class.
    pub speed: [f64; 4],
    pub blob_sigma: f64,
    pub blob_peak: f64,
    pub frames: usize,
    pub image: usize,
    pub sample_rate: u32,
    pub duration_secs: f64,
    pub background_rms: f64,
    pub burst_amplitude: f64,
    pub burst_secs: f64,
    pub burst_band: [f64; 2],
    pub pixel_noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            burst_rate: [0.0, 2.0, 8.0, 20.0],
            blob_count: 12,
            dispersion: [22.0, 15.0, 9.0, 4.0],
            speed: [0.3, 0.8, 1.5, 2.5],
            blob_sigma: 2.5,
            blob_peak: 0.8,
            frames: 16,
            image: 64,
            sample_rate: crate::dsp::SAMPLE_RATE,
            duration_secs: 2.0,
            background_rms: 0.05,
            burst_amplitude: 0.3,
            burst_secs: 0.02,
            burst_band: [2200.0, 5800.0],
            pixel_noise: 0.02,
        }
    }
}

impl SynthParams {
    /// 224×224, 50-frame clips. Geometry scales with the image side.
    pub fn canonical() -> Self {
        let s = 224.0 / 64.0;
        let d = Self::default();
        Self {
            dispersion: d.dispersion.map(|r| r * s),
            speed: d.speed.map(|v| v * s),
            blob_sigma: d.blob_sigma * s,
            frames: 50,
            image: 224,
            ..d
        }
    }

    pub fn samples(&self) -> usize {
        (self.sample_rate as f64 * self.duration_secs).round() as usize
    }

    pub fn burst_len(&self) -> usize {
        (self.sample_rate as f64 * self.burst_secs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = self.burst_rate.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.dispersion.windows(2).all(|w| w[0] > w[1]);
        if !increasing || !decreasing {
            return Err(Error::config("burst rates must increase and dispersion must decrease with intensity"));
        }
        if self.burst_rate[0] < 0.0 || self.dispersion[3] <= 0.0 {
            return Err(Error::config("burst rates must be non-negative and dispersion positive"));
        }
        if self.frames == 0 || self.image == 0 || self.blob_count == 0 || self.samples() < 2 * self.burst_len() {
            return Err(Error::config("synthetic clip geometry is empty"));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0 < self.burst_band[0] && self.burst_band[0] < self.burst_band[1] && self.burst_band[1] < nyquist) {
            return Err(Error::config(format!("burst band {:?} must lie below {nyquist} Hz", self.burst_band)));
        }
        Ok(())
    }
}

/// A generated clip with its generating class and burst count.
#[derive(Clone, Debug)]
pub struct SynthClip {
    pub class: Intensity,
    pub waveform: Waveform,
    pub video: VideoClip,
    pub bursts: usize,
}

pub fn generate_clip(class: Intensity, p: &SynthParams, rng: &mut Rng) -> Result<SynthClip> {
    p.validate()?;
    let (waveform, bursts) = generate_audio(class, p, rng)?;
    let video = generate_video(class, p, rng)?;
    Ok(SynthClip { class, waveform, video, bursts })
}

/// White noise shaped to a 1/f power spectrum above 20 Hz, scaled to `rms`.
pub fn pink_noise(n: usize, sample_rate: u32, rms: f64, rng: &mut Rng) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(StandardNormal.sample(rng), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sample_rate as f64 / n as f64;
        *c *= if f < 20.0 { 0.0 } else { 1.0 / f.sqrt() };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    x.into_iter().map(|v| v * rms / cur).collect()
}

fn generate_audio(class: Intensity, p: &SynthParams, rng: &mut Rng) -> Result<(Waveform, usize)> {
    let n = p.samples();
    let mut x = pink_noise(n, p.sample_rate, p.background_rms, rng);
    let rate = p.burst_rate[class.index()] * p.duration_secs;
    let count = if rate > 0.0 {
        Poisson::new(rate).map_err(|e| Error::config(e.to_string()))?.sample(rng) as usize
    } else {
        0
    };
    let len = p.burst_len();
    let window = crate::dsp::mel::hann(len);
    let mut planner = FftPlanner::<f64>::new();
    let (fwd, inv) = (planner.plan_fft_forward(len), planner.plan_fft_inverse(len));
    let hz = p.sample_rate as f64 / len as f64;
    for _ in 0..count {
        let start = rng.random_range(0..=n - len);
        let mut buf: Vec<Complex<f64>> = (0..len).map(|_| Complex::new(StandardNormal.sample(rng), 0.0)).collect();
        fwd.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let f = k.min(len - k) as f64 * hz;
            if f < p.burst_band[0] || f > p.burst_band[1] {
                *c = Complex::new(0.0, 0.0);
            }
        }
        inv.process(&mut buf);
        // Same mean power as a sinusoid of the burst amplitude.
        let rms = (buf.iter().map(|c| c.re * c.re).sum::<f64>() / len as f64).sqrt();
        let gain = p.burst_amplitude / (2f64.sqrt() * rms);
        for (j, &w) in window.iter().enumerate() {
            x[start + j] += gain * w as f64 * buf[j].re;
        }
    }
    let w = Waveform::new(x.into_iter().map(|v| v as Real).collect(), p.sample_rate)?;
    Ok((w, count))
}

fn generate_video(class: Intensity, p: &SynthParams, rng: &mut Rng) -> Result<VideoClip> {
    let side = p.image as f64;
    let r = p.dispersion[class.index()];
    let speed = p.speed[class.index()];
    let reach = 1.3 * r + 2.0 * p.blob_sigma + 1.0;
    let slack = (side / 2.0 - reach).max(0.0);
    let cx = side / 2.0 + rng.random_range(-slack..=slack);
    let cy = side / 2.0 + rng.random_range(-slack..=slack);
    let spin = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let phase0 = rng.random_range(0.0..2.0 * PI);
    let blobs: Vec<(f64, f64)> = (0..p.blob_count)
        .map(|i| {
            let radius = r * rng.random_range(0.7..1.3);
            let angle = phase0 + 2.0 * PI * i as f64 / p.blob_count as f64 + rng.random_range(-0.2..0.2);
            (radius, angle)
        })
        .collect();
    let tint = [0.9, 1.0, 0.8];
    let two_s2 = 2.0 * p.blob_sigma * p.blob_sigma;
    let reach_px = (3.0 * p.blob_sigma).ceil() as isize;
    let plane = p.image * p.image;
    let mut pixels = Vec::with_capacity(p.frames * 3 * plane);
    let mut intensity = vec![0.0f64; plane];
    for f in 0..p.frames {
        intensity.iter_mut().for_each(|v| *v = 0.1);
        for &(radius, angle) in &blobs {
            let a = angle + spin * speed * f as f64 / radius;
            let (bx, by) = (cx + radius * a.cos(), cy + radius * a.sin());
            let (x0, y0) = (bx.round() as isize, by.round() as isize);
            for y in (y0 - reach_px).max(0)..=(y0 + reach_px).min(p.image as isize - 1) {
                for x in (x0 - reach_px).max(0)..=(x0 + reach_px).min(p.image as isize - 1) {
                    let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    intensity[y as usize * p.image + x as usize] += p.blob_peak * (-d2 / two_s2).exp();
                }
            }
        }
        for t in tint {
            pixels.extend(intensity.iter().map(|&v| {
                let n: f64 = StandardNormal.sample(rng);
                ((v * t + p.pixel_noise * n).clamp(0.0, 1.0) * 255.0).round() as u8
            }));
        }
    }
    VideoClip::new(pixels, p.frames, p.image, p.image)
}
