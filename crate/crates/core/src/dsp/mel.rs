use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, Real, Tensor};

/// Log-mel frontend parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    /// Fixed number of output frames; the signal is zero-padded (or cut) to
    /// `(frames − 1)·hop + n_fft` samples. `None` yields `ceil(len / hop)`.
    pub frames: Option<usize>,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            n_fft: 2048,
            hop: 1024,
            n_mels: 128,
            frames: Some(128),
            log_floor: 1e-10,
        }
    }
}

/// Log-mel matrix, `frames × mel bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFeature {
    pub values: Tensor,
    /// Time compression applied by spectral pooling (1 when uncompressed).
    pub compression: f64,
}

impl MelFeature {
    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            "mel",
            serde_json::json!({ "compression": self.compression }),
            vec![("mel".into(), self.values.clone())],
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_tag("mel")?;
        let values = ck
            .get("mel")
            .ok_or_else(|| Error::Checkpoint("mel cache without `mel` tensor".into()))?
            .clone();
        values.dims2()?;
        let compression = ck.meta["compression"].as_f64().unwrap_or(1.0);
        Ok(Self { values, compression })
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the non-negative FFT bins. Rows are stored
/// sparsely as `(first_bin, weights)`.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    n_bins: usize,
    centers_hz: Vec<f64>,
    rows: Vec<(usize, Vec<Real>)>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Self> {
        if n_mels == 0 || n_fft < 2 {
            return Err(Error::config("mel filterbank needs n_mels ≥ 1 and n_fft ≥ 2"));
        }
        if n_mels > n_fft / 2 {
            return Err(Error::config(format!(
                "{n_mels} mel bins cannot be resolved by a {n_fft}-point FFT"
            )));
        }
        let n_bins = n_fft / 2 + 1;
        let top = hz_to_mel(sample_rate as f64 / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let mut rows = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut first = None;
            let mut w = Vec::new();
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let v = if f > lo && f <= c {
                    (f - lo) / (c - lo)
                } else if f > c && f < hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
                if v > 0.0 {
                    first.get_or_insert(k);
                    w.push(v as Real);
                } else if first.is_some() {
                    break;
                }
            }
            let first = first.ok_or_else(|| {
                Error::config(format!("mel filter {m} covers no FFT bin; lower n_mels or raise n_fft"))
            })?;
            rows.push((first, w));
        }
        Ok(Self {
            n_bins,
            centers_hz: edges[1..=n_mels].to_vec(),
            rows,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Dense `n_mels × (n_fft/2 + 1)` weight matrix.
    pub fn dense(&self) -> Tensor {
        let mut data = vec![0.0; self.rows.len() * self.n_bins];
        for (m, (first, w)) in self.rows.iter().enumerate() {
            data[m * self.n_bins + first..m * self.n_bins + first + w.len()].copy_from_slice(w);
        }
        Tensor::new([self.rows.len(), self.n_bins], data).expect("consistent shape")
    }

    fn apply(&self, spectrum: &[Real], out: &mut [Real]) {
        for (o, (first, w)) in out.iter_mut().zip(&self.rows) {
            *o = w.iter().zip(&spectrum[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<Real> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()) as Real)
        .collect()
}

/// Shared STFT state so repeated calls reuse the FFT plan and filterbank.
pub struct MelFrontend {
    cfg: MelConfig,
    window: Vec<Real>,
    bank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl MelFrontend {
    pub fn new(cfg: MelConfig) -> Result<Self> {
        if cfg.hop == 0 || cfg.n_fft == 0 {
            return Err(Error::config("hop and n_fft must be positive"));
        }
        let bank = MelFilterbank::new(cfg.n_mels, cfg.n_fft, cfg.sample_rate)?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            window: hann(cfg.n_fft),
            bank,
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        self.cfg
            .frames
            .unwrap_or_else(|| n_samples.div_ceil(self.cfg.hop).max(1))
    }

    pub fn compute(&self, w: &Waveform) -> Result<MelFeature> {
        if w.samples.is_empty() {
            return Err(Error::input("cannot compute a spectrogram of an empty signal"));
        }
        if w.sample_rate != self.cfg.sample_rate {
            return Err(Error::input(format!(
                "waveform at {} Hz, frontend expects {} Hz",
                w.sample_rate, self.cfg.sample_rate
            )));
        }
        let (n_fft, hop, n_mels) = (self.cfg.n_fft, self.cfg.hop, self.cfg.n_mels);
        let frames = self.frame_count(w.samples.len());
        let n_bins = n_fft / 2 + 1;
        let floor = self.cfg.log_floor as Real;
        let mut buf = vec![Complex::new(0.0f64, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0f64, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0 as Real; n_bins];
        let mut out = vec![0.0 as Real; frames * n_mels];
        for f in 0..frames {
            let start = f * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let s = w.samples.get(start + i).copied().unwrap_or(0.0);
                *b = Complex::new((s * self.window[i]) as f64, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, b) in mag.iter_mut().zip(&buf) {
                *m = b.norm() as Real;
            }
            let row = &mut out[f * n_mels..(f + 1) * n_mels];
            self.bank.apply(&mag, row);
            row.iter_mut().for_each(|v| *v = v.max(floor).ln());
        }
        Ok(MelFeature {
            values: Tensor::new([frames, n_mels], out)?,
            compression: 1.0,
        })
    }
}

/// Hann-windowed magnitude STFT → mel projection → natural log with floor.
pub fn stft_log_mel(w: &Waveform, cfg: &MelConfig) -> Result<MelFeature> {
    MelFrontend::new(cfg.clone())?.compute(w)
}
