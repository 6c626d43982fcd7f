use rand::Rng;

use crate::audio::{resample, Waveform};
use crate::error::{Error, Result};

pub const SEMITONES: [i32; 4] = [-2, -1, 1, 2];

/// Shift by a semitone from [`SEMITONES`]; `None` draws one uniformly.
pub fn pitch_shift<R: Rng + ?Sized>(w: &Waveform, semitones: Option<i32>, rng: &mut R) -> Result<Waveform> {
    let st = match semitones {
        Some(s) if SEMITONES.contains(&s) => s,
        Some(s) => {
            return Err(Error::Config(format!(
                "pitch shift of {s} semitones is outside {SEMITONES:?}"
            )))
        }
        None => SEMITONES[rng.gen_range(0..SEMITONES.len())],
    };
    pitch_shift_unchecked(w, st as f64)
}

/// Resamples by `2^(−st/12)` (reinterpreting the clip at a scaled rate)
/// and pads or truncates back to the input length. Tempo changes along
/// with pitch.
pub fn pitch_shift_unchecked(w: &Waveform, semitones: f64) -> Result<Waveform> {
    let ratio = 2f64.powf(semitones / 12.0);
    let scaled_rate = (w.rate() as f64 * ratio).round();
    if !(scaled_rate >= 1.0 && scaled_rate <= u32::MAX as f64) {
        return Err(Error::Config(format!("pitch shift of {semitones} semitones is out of range")));
    }
    let relabeled = Waveform::new(w.samples().to_vec(), scaled_rate as u32)?;
    let shifted = resample(&relabeled, w.rate())?;
    let mut s = shifted.samples().to_vec();
    s.resize(w.len(), 0.0);
    Waveform::new(s, w.rate())
}
