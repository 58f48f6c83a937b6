//! Additive corruption at a calibrated signal-to-noise ratio.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// White noise restricted to 500–4000 Hz.
    Bubble,
    /// 50 Hz hum with nine harmonics and a little broadband floor.
    Pump,
    White,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Bubble, NoiseKind::Pump, NoiseKind::White];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// `f64::INFINITY` disables mixing.
    pub snr_db: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, snr_db: f64) -> Self {
        Self { kind, snr_db }
    }

    pub fn clean() -> Self {
        Self { kind: NoiseKind::White, snr_db: f64::INFINITY }
    }
}

const BUBBLE_BAND: (f64, f64) = (500.0, 4000.0);
const HUM_HZ: f64 = 50.0;
const HUM_HARMONICS: usize = 10;

/// Unscaled noise of the requested kind.
pub fn generate_noise(kind: NoiseKind, len: usize, sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let white = |rng: &mut Rng| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(rng)).collect() };
    match kind {
        NoiseKind::White => white(rng),
        NoiseKind::Bubble => band_limit(&white(rng), sample_rate, BUBBLE_BAND),
        NoiseKind::Pump => {
            let phases: Vec<f64> = (0..HUM_HARMONICS).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let floor = white(rng);
            (0..len)
                .map(|i| {
                    let t = i as f64 / sample_rate as f64;
                    let hum: f64 = phases
                        .iter()
                        .enumerate()
                        .map(|(h, &p)| (2.0 * PI * HUM_HZ * (h + 1) as f64 * t + p).sin() / (h + 1) as f64)
                        .sum();
                    hum + 0.05 * floor[i]
                })
                .collect()
        }
    }
}

fn band_limit(x: &[f64], sample_rate: u32, (lo, hi): (f64, f64)) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * sample_rate as f64 / n as f64;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Adds noise scaled so that `10·log10(P_signal / P_noise)` equals `spec.snr_db`.
pub fn mix_at_snr(signal: &Waveform, spec: &NoiseSpec, rng: &mut Rng) -> Result<Waveform> {
    if spec.snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if !spec.snr_db.is_finite() {
        return Err(Error::config(format!("invalid SNR {}", spec.snr_db)));
    }
    let ps = signal.power();
    if ps <= 0.0 {
        return Err(Error::input("signal is silent; SNR is undefined"));
    }
    let noise = generate_noise(spec.kind, signal.samples.len(), signal.sample_rate, rng);
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    if pn <= 0.0 {
        return Err(Error::Numeric("generated noise has zero power".into()));
    }
    let alpha = (ps / (pn * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    let samples = signal
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| s + (alpha * n) as Real)
        .collect();
    Waveform::new(samples, signal.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{CLIP_SAMPLES, SAMPLE_RATE};
    use crate::rng;

    fn sine(freq: f64) -> Waveform {
        let s = (0..CLIP_SAMPLES)
            .map(|i| (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin() as Real)
            .collect();
        Waveform::new(s, SAMPLE_RATE).unwrap()
    }

    fn mean_square(x: impl Iterator<Item = f64>) -> f64 {
        let (s, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
        s / n as f64
    }

    fn achieved_snr(clean: &Waveform, mixed: &Waveform) -> f64 {
        let pn = mean_square(mixed.samples.iter().zip(&clean.samples).map(|(&m, &c)| (m - c) as f64));
        10.0 * (mean_square(clean.samples.iter().map(|&c| c as f64)) / pn).log10()
    }

    #[test]
    fn unit_sine_at_ten_db() {
        let clean = sine(440.0);
        let mixed = mix_at_snr(&clean, &NoiseSpec::new(NoiseKind::White, 10.0), &mut rng::seeded(1)).unwrap();
        let pn = mean_square(mixed.samples.iter().zip(&clean.samples).map(|(&m, &c)| (m - c) as f64));
        assert!((pn - 0.05).abs() <= 0.05 * 0.02, "noise power {pn}");
    }

    #[test]
    fn every_kind_hits_target() {
        let clean = sine(1000.0);
        for kind in NoiseKind::ALL {
            for snr in [-10.0, -5.0, 0.0, 10.0, 20.0] {
                let mixed = mix_at_snr(&clean, &NoiseSpec::new(kind, snr), &mut rng::seeded(7)).unwrap();
                let got = achieved_snr(&clean, &mixed);
                assert!((got - snr).abs() < 0.1, "{kind:?} {snr} -> {got}");
            }
        }
    }

    #[test]
    fn infinite_snr_is_identity() {
        let clean = sine(300.0);
        assert_eq!(mix_at_snr(&clean, &NoiseSpec::clean(), &mut rng::seeded(0)).unwrap(), clean);
    }

    #[test]
    fn silent_signal_rejected() {
        let silent = Waveform::new(vec![0.0; 1000], SAMPLE_RATE).unwrap();
        let err = mix_at_snr(&silent, &NoiseSpec::new(NoiseKind::Pump, 0.0), &mut rng::seeded(0));
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn bubble_noise_stays_in_band() {
        let n = 8192;
        let x = generate_noise(NoiseKind::Bubble, n, SAMPLE_RATE, &mut rng::seeded(3));
        // Direct DFT at a few probe frequencies.
        let probe = |f: f64| -> f64 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let w = 2.0 * PI * f * i as f64 / SAMPLE_RATE as f64;
                re += v * w.cos();
                im -= v * w.sin();
            }
            (re * re + im * im).sqrt()
        };
        let bin = SAMPLE_RATE as f64 / n as f64;
        assert!(probe(20.0 * bin) < 1e-6);
        assert!(probe(1000.0 * bin) < 1e-6);
        assert!(probe(200.0 * bin) > 1.0);
    }
}
