use std::f64::consts::PI;

use rand::Rng;

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Serial filter count of the default chain.
pub const EQ_STAGES: usize = 4;
pub const EQ_Q: f64 = 0.707;
pub const CENTER_RANGE_HZ: (f64, f64) = (30.0, 3000.0);
pub const GAIN_RANGE_DB: (f64, f64) = (-8.0, 8.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub center_hz: f64,
    pub gain_db: f64,
}

/// Normalized biquad (`a0 = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Direct form I over `x`.
    pub fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

/// Peaking-EQ coefficients from the RBJ audio EQ cookbook.
pub fn peaking_coefficients(band: Band, q: f64, rate: u32) -> Biquad {
    let a = 10f64.powf(band.gain_db / 40.0);
    let w0 = 2.0 * PI * band.center_hz / rate as f64;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha / a;
    Biquad {
        b: [(1.0 + alpha * a) / a0, -2.0 * cw / a0, (1.0 - alpha * a) / a0],
        a: [-2.0 * cw / a0, (1.0 - alpha / a) / a0],
    }
}

/// Applies the bands in series with fixed `Q`; output clipped to `[-1, 1]`.
pub fn equalizer_with(w: &Waveform, bands: &[Band], q: f64) -> Result<Waveform> {
    if (w.rate() as f64) <= 2.0 * CENTER_RANGE_HZ.1 {
        return Err(Error::Config(format!(
            "equalizer needs a sample rate above {} Hz, got {}",
            2.0 * CENTER_RANGE_HZ.1,
            w.rate()
        )));
    }
    let mut x = w.to_f64();
    for &band in bands {
        x = peaking_coefficients(band, q, w.rate()).run(&x);
    }
    let clipped: Vec<f64> = x.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    Waveform::from_f64(&clipped, w.rate())
}

/// `s` peaking filters with log-uniform centers in 30–3000 Hz and uniform
/// gains in ±8 dB.
pub fn equalizer_chain<R: Rng + ?Sized>(w: &Waveform, s: usize, rng: &mut R) -> Result<Waveform> {
    let (lo, hi) = (CENTER_RANGE_HZ.0.ln(), CENTER_RANGE_HZ.1.ln());
    let bands: Vec<Band> = (0..s)
        .map(|_| Band {
            center_hz: rng.gen_range(lo..=hi).exp(),
            gain_db: rng.gen_range(GAIN_RANGE_DB.0..=GAIN_RANGE_DB.1),
        })
        .collect();
    equalizer_with(w, &bands, EQ_Q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gain_is_identity() {
        let w = Waveform::from_f64(&(0..2000).map(|i| 0.5 * (i as f64 * 0.3).sin()).collect::<Vec<_>>(), 16000).unwrap();
        let bands: Vec<Band> = [50.0, 400.0, 1000.0, 2900.0]
            .iter()
            .map(|&f| Band { center_hz: f, gain_db: 0.0 })
            .collect();
        let out = equalizer_with(&w, &bands, EQ_Q).unwrap();
        for (a, b) in out.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn low_rate_is_rejected() {
        let w = Waveform::new(vec![0.1; 100], 6000).unwrap();
        assert!(equalizer_with(&w, &[], EQ_Q).is_err());
    }
}
