use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{rms, Waveform};
use crate::error::{Error, Result};

pub const SNR_RANGE_DB: (f64, f64) = (12.0, 100.0);
pub const GAMMA_RANGE: (f64, f64) = (-2.0, 2.0);

#[derive(Clone, Debug)]
pub struct NoiseOutcome {
    pub wave: Waveform,
    pub snr_db: f64,
    pub gamma: f64,
    /// Silent input: returned unchanged.
    pub skipped: bool,
}

/// `20·log10(rms(clean) / rms(mixed − clean))`.
pub fn measured_snr_db(clean: &Waveform, mixed: &Waveform) -> f64 {
    let c = clean.to_f64();
    let diff: Vec<f64> = mixed.samples().iter().zip(&c).map(|(&m, &x)| m as f64 - x).collect();
    20.0 * (rms(&c) / rms(&diff)).log10()
}

/// Colored noise with a random spectral slope and SNR.
pub fn add_colored_noise<R: Rng + ?Sized>(w: &Waveform, rng: &mut R) -> Result<NoiseOutcome> {
    let snr = rng.gen_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1);
    let gamma = rng.gen_range(GAMMA_RANGE.0..=GAMMA_RANGE.1);
    add_colored_noise_with(w, snr, gamma, rng)
}

/// Gaussian noise shaped by `|f|^(−γ/2)` in amplitude (power `∝ |f|^−γ`),
/// scaled to `snr_db` below the signal RMS, added and clipped.
pub fn add_colored_noise_with<R: Rng + ?Sized>(
    w: &Waveform,
    snr_db: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<NoiseOutcome> {
    if !snr_db.is_finite() || !gamma.is_finite() {
        return Err(Error::Config("noise parameters must be finite".into()));
    }
    let x = w.to_f64();
    let signal_rms = rms(&x);
    if signal_rms == 0.0 {
        log::warn!("colored noise skipped on a silent input");
        return Ok(NoiseOutcome {
            wave: w.clone(),
            snr_db,
            gamma,
            skipped: true,
        });
    }
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex::new(0.0, 0.0);
    for (k, c) in buf.iter_mut().enumerate().skip(1) {
        let f = k.min(n - k) as f64 / n as f64;
        *c *= f.powf(-gamma / 2.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let noise: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let noise_rms = rms(&noise);
    if noise_rms == 0.0 {
        return Ok(NoiseOutcome {
            wave: w.clone(),
            snr_db,
            gamma,
            skipped: true,
        });
    }
    let gain = signal_rms / 10f64.powf(snr_db / 20.0) / noise_rms;
    let mixed: Vec<f64> = x.iter().zip(&noise).map(|(s, v)| (s + gain * v).clamp(-1.0, 1.0)).collect();
    Ok(NoiseOutcome {
        wave: Waveform::from_f64(&mixed, w.rate())?,
        snr_db,
        gamma,
        skipped: false,
    })
}
