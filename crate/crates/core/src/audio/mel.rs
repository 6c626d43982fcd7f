//! Log-mel spectrogram: Hann-windowed magnitude STFT, HTK mel filterbank
//! spanning 0 Hz to Nyquist, natural log with a small floor.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

pub const LOG_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMelConfig {
    pub bins: usize,
    pub window: usize,
    pub hop: usize,
    pub fft: usize,
}

impl Default for LogMelConfig {
    fn default() -> Self {
        Self {
            bins: 128,
            window: 1024,
            hop: 512,
            fft: 1024,
        }
    }
}

impl LogMelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.hop == 0 || !(self.fft >= self.window && self.window >= self.hop) {
            return Err(Error::Config(format!(
                "log-mel needs bins > 0 and fft ≥ window ≥ hop > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Frames produced for a clip of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.hop + 1
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequency (Hz) of each mel band.
pub fn mel_centers(bins: usize, rate: u32) -> Vec<f64> {
    let top = hz_to_mel(rate as f64 / 2.0);
    (1..=bins).map(|i| mel_to_hz(top * i as f64 / (bins + 1) as f64)).collect()
}

/// Triangular filters, linear in mel, sampled at the FFT bin frequencies.
fn filterbank(cfg: &LogMelConfig, rate: u32) -> Vec<Vec<(usize, f64)>> {
    let top = hz_to_mel(rate as f64 / 2.0);
    let edges: Vec<f64> = (0..cfg.bins + 2).map(|i| top * i as f64 / (cfg.bins + 1) as f64).collect();
    let n_freq = cfg.fft / 2 + 1;
    let bin_mel: Vec<f64> = (0..n_freq)
        .map(|k| hz_to_mel(k as f64 * rate as f64 / cfg.fft as f64))
        .collect();
    (0..cfg.bins)
        .map(|b| {
            let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            bin_mel
                .iter()
                .enumerate()
                .filter_map(|(k, &m)| {
                    let w = ((m - lo) / (c - lo)).min((hi - m) / (hi - c));
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// `bins × frames` log-mel matrix (32-bit).
pub fn log_mel(w: &Waveform, cfg: &LogMelConfig) -> Result<Tensor> {
    cfg.validate()?;
    let frames = cfg.frames(w.len());
    if frames == 0 {
        return Err(Error::Data(format!(
            "clip of {} samples is shorter than one {}-sample window",
            w.len(),
            cfg.window
        )));
    }
    let x = w.to_f64();
    let hann: Vec<f64> = (0..cfg.window)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / cfg.window as f64).cos())
        .collect();
    let fb = filterbank(cfg, w.rate());
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.fft);
    let n_freq = cfg.fft / 2 + 1;

    let mut out = vec![0.0; cfg.bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft];
    let mut mag = vec![0.0; n_freq];
    for t in 0..frames {
        let start = t * cfg.hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..cfg.window {
            buf[i].re = x[start + i] * hann[i];
        }
        fft.process(&mut buf);
        for k in 0..n_freq {
            mag[k] = buf[k].norm();
        }
        for (b, filt) in fb.iter().enumerate() {
            let e: f64 = filt.iter().map(|&(k, wt)| wt * mag[k]).sum();
            out[b * frames + t] = (e + LOG_EPS).ln();
        }
    }
    Tensor::new(&[cfg.bins, frames], out, DType::F32)
}
