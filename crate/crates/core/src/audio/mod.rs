//! Waveform ingestion, log-mel features and synthetic harmonic-tone tasks.

mod mel;
mod resample;
mod synth;
mod wav;

pub use mel::{hz_to_mel, log_mel, mel_centers, mel_to_hz, LogMelConfig, LOG_EPS};
pub use resample::resample;
pub use synth::{synth_dataset, ClassTemplate, SynthTaskSpec};
pub use wav::{decode_wav, encode_wav, load_wav, write_wav, WavFormat};

use crate::error::{Error, Result};

/// Mono audio. Samples are clipped to `[-1, 1]` on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    rate: u32,
}

impl Waveform {
    pub fn new(mut samples: Vec<f32>, rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("empty waveform".into()));
        }
        if rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self { samples, rate })
    }

    /// Builds from 64-bit values, rounding to 32-bit.
    pub fn from_f64(samples: &[f64], rate: u32) -> Result<Self> {
        Self::new(samples.iter().map(|&s| s as f32).collect(), rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seconds(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.to_f64())
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Zero-pads or truncates on the right to `round(seconds·rate)` samples.
pub fn fix_duration(w: &Waveform, seconds: f64) -> Result<Waveform> {
    if !(seconds > 0.0) || !seconds.is_finite() {
        return Err(Error::Config(format!("duration must be positive, got {seconds}")));
    }
    let n = (seconds * w.rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::Config(format!("{seconds} s is shorter than one sample")));
    }
    let mut s = w.samples.clone();
    s.resize(n, 0.0);
    Waveform::new(s, w.rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fix_duration_pads_and_truncates() {
        let w = Waveform::new(vec![0.25; 8000], 16000).unwrap();
        let padded = fix_duration(&w, 1.0).unwrap();
        assert_eq!(padded.len(), 16000);
        assert!(padded.samples()[8000..].iter().all(|&s| s == 0.0));
        assert_eq!(fix_duration(&w, 0.5).unwrap(), w);

        let long = Waveform::new((0..32000).map(|i| (i as f32 / 32000.0) - 0.5).collect(), 16000).unwrap();
        assert_eq!(fix_duration(&long, 1.0).unwrap().samples(), &long.samples()[..16000]);
        assert!(fix_duration(&w, 0.0).is_err());
    }

    #[test]
    fn construction_validates() {
        assert!(Waveform::new(vec![], 16000).is_err());
        assert!(Waveform::new(vec![f32::NAN], 16000).is_err());
        assert_eq!(Waveform::new(vec![2.0, -3.0], 8000).unwrap().samples(), &[1.0, -1.0]);
    }
}
