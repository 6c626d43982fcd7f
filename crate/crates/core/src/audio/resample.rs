//! Band-limited polyphase resampling with a Blackman-windowed sinc.

use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

/// Zero crossings of the sinc on each side, at the lower of the two rates.
const ZEROS: usize = 16;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;
/// Above this many phases the filter taps are computed per output sample.
const MAX_TABLE_PHASES: usize = 4096;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn kernel(t: f64, fc: f64, half: f64) -> f64 {
    if t.abs() >= half {
        return 0.0;
    }
    let sinc = if t == 0.0 {
        1.0
    } else {
        (PI * fc * t).sin() / (PI * fc * t)
    };
    let x = (t / half + 1.0) / 2.0;
    let win = 0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos();
    fc * sinc * win
}

/// Taps for fractional offset `frac ∈ [0,1)`, normalized to unit DC gain.
fn taps(frac: f64, fc: f64, half: f64, reach: isize) -> Vec<f64> {
    let mut h: Vec<f64> = (-reach + 1..=reach).map(|j| kernel(j as f64 - frac, fc, half)).collect();
    let s: f64 = h.iter().sum();
    if s != 0.0 {
        for v in &mut h {
            *v /= s;
        }
    }
    h
}

/// Resamples to `target_rate`. The output has `round(len·target/source)`
/// samples; equal rates return the input unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::Config("target sample rate must be positive".into()));
    }
    if target_rate == w.rate() {
        return Ok(w.clone());
    }
    let g = gcd(w.rate() as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = w.rate() as u64 / g;
    let fc = ROLLOFF * (up as f64 / down as f64).min(1.0);
    let half = ZEROS as f64 / fc;
    let reach = half.ceil() as isize;

    let x = w.to_f64();
    let n_out = ((x.len() as u64 * up * 2 + down) / (2 * down)).max(1) as usize;
    let table: Option<Vec<Vec<f64>>> = (up as usize <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| taps(p as f64 / up as f64, fc, half, reach)).collect());

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let k0 = (pos / up) as isize;
        let phase = pos % up;
        let owned;
        let h = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = taps(phase as f64 / up as f64, fc, half, reach);
                &owned
            }
        };
        let mut acc = 0.0;
        for (i, &c) in h.iter().enumerate() {
            let k = k0 - reach + 1 + i as isize;
            if k >= 0 && (k as usize) < x.len() {
                acc += c * x[k as usize];
            }
        }
        out.push(acc);
    }
    Waveform::from_f64(&out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_rate_is_identity() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16000).unwrap();
        assert_eq!(resample(&w, 16000).unwrap(), w);
    }

    #[test]
    fn length_follows_ratio() {
        let w = Waveform::new(vec![0.0; 44100], 44100).unwrap();
        let r = resample(&w, 16000).unwrap();
        assert!((r.len() as i64 - 16000).abs() <= 1);
        assert_eq!(r.rate(), 16000);
        let odd = resample(&Waveform::new(vec![0.0; 1000], 16000).unwrap(), 16001).unwrap();
        assert!((odd.len() as i64 - 1000).abs() <= 1);
    }

    #[test]
    fn dc_is_preserved_away_from_edges() {
        let w = Waveform::new(vec![0.5; 8000], 16000).unwrap();
        for target in [8000, 22050, 44100] {
            let r = resample(&w, target).unwrap();
            let n = r.len();
            for &s in &r.samples()[n / 4..3 * n / 4] {
                assert!((s - 0.5).abs() < 1e-4, "{target}: {s}");
            }
        }
    }
}
