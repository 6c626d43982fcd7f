//! Waveform augmentations for the replicated shot of augmented division:
//! colored noise, a random peaking-equalizer chain and pitch shifting.

mod eq;
mod noise;
mod pitch;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use eq::{equalizer_chain, equalizer_with, peaking_coefficients, Band, Biquad, EQ_Q, EQ_STAGES};
pub use noise::{add_colored_noise, add_colored_noise_with, measured_snr_db, NoiseOutcome};
pub use pitch::{pitch_shift, pitch_shift_unchecked, SEMITONES};

use crate::audio::{log_mel, LogMelConfig, Waveform};
use crate::episodes::{Augmenter, Sample};
use crate::error::{Error, Result};
use crate::nn::fit_frames;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    None,
    Noise,
    Equalizer,
    Pitch,
    Random,
}

impl AugmentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "noise" => Ok(Self::Noise),
            "equalizer" | "eq" => Ok(Self::Equalizer),
            "pitch" => Ok(Self::Pitch),
            "random" => Ok(Self::Random),
            _ => Err(Error::Config(format!("unknown augmentation {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Noise => "noise",
            Self::Equalizer => "equalizer",
            Self::Pitch => "pitch",
            Self::Random => "random",
        }
    }
}

/// The concrete transform `random_augment` picked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Choice {
    Noise,
    Equalizer,
    Pitch,
}

/// Applies one augmentation kind. Returns the waveform and whether a
/// silent input made the noise augmenter skip.
pub fn apply<R: Rng + ?Sized>(kind: AugmentKind, w: &Waveform, rng: &mut R) -> Result<(Waveform, bool)> {
    match kind {
        AugmentKind::None => Ok((w.clone(), false)),
        AugmentKind::Noise => {
            let o = add_colored_noise(w, rng)?;
            Ok((o.wave, o.skipped))
        }
        AugmentKind::Equalizer => Ok((equalizer_chain(w, EQ_STAGES, rng)?, false)),
        AugmentKind::Pitch => Ok((pitch_shift(w, None, rng)?, false)),
        AugmentKind::Random => random_augment(w, rng).map(|(w, _, s)| (w, s)),
    }
}

/// Picks noise, equalizer or pitch shift uniformly and applies it.
pub fn random_augment<R: Rng + ?Sized>(w: &Waveform, rng: &mut R) -> Result<(Waveform, Choice, bool)> {
    let choice = match rng.gen_range(0..3) {
        0 => Choice::Noise,
        1 => Choice::Equalizer,
        _ => Choice::Pitch,
    };
    let (out, skipped) = match choice {
        Choice::Noise => apply(AugmentKind::Noise, w, rng)?,
        Choice::Equalizer => apply(AugmentKind::Equalizer, w, rng)?,
        Choice::Pitch => apply(AugmentKind::Pitch, w, rng)?,
    };
    Ok((out, choice, skipped))
}

/// Re-featurizes augmented audio so the replicated shot matches the
/// backbone input. Samples without a waveform fail, which makes the
/// division fall back to plain replication.
pub struct AudioAugmenter {
    pub kind: AugmentKind,
    pub mel: LogMelConfig,
    pub frames: usize,
    silent: AtomicUsize,
}

impl AudioAugmenter {
    pub fn new(kind: AugmentKind, mel: LogMelConfig, frames: usize) -> Arc<Self> {
        Arc::new(Self {
            kind,
            mel,
            frames,
            silent: AtomicUsize::new(0),
        })
    }

    /// Inputs the noise augmenter left unchanged because they were silent.
    pub fn silent_inputs(&self) -> usize {
        self.silent.load(Ordering::Relaxed)
    }
}

impl Augmenter for AudioAugmenter {
    fn augment(&self, sample: &Sample, rng: &mut dyn RngCore) -> Result<Sample> {
        let w = sample
            .waveform
            .as_ref()
            .ok_or_else(|| Error::Data(format!("sample {} carries no waveform", sample.source_id)))?;
        let (out, skipped) = apply(self.kind, w, rng)?;
        if skipped {
            self.silent.fetch_add(1, Ordering::Relaxed);
        }
        let features = fit_frames(&log_mel(&out, &self.mel)?, self.frames)?;
        Ok(Sample {
            features,
            class_id: sample.class_id,
            source_id: sample.source_id.clone(),
            waveform: Some(Arc::new(out)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone() -> Waveform {
        Waveform::from_f64(
            &(0..8000).map(|i| 0.3 * (i as f64 * 0.07).sin()).collect::<Vec<_>>(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn random_choice_sequence_is_seeded() {
        let w = Waveform::new(vec![0.1; 2000], 16000).unwrap();
        let seq = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..12).map(|_| random_augment(&w, &mut rng).unwrap().1).collect::<Vec<_>>()
        };
        assert_eq!(seq(5), seq(5));
    }

    #[test]
    fn augmenters_keep_rate_length_and_range() {
        let w = tone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [AugmentKind::Noise, AugmentKind::Equalizer, AugmentKind::Pitch, AugmentKind::Random] {
            for _ in 0..5 {
                let (o, _) = apply(kind, &w, &mut rng).unwrap();
                assert_eq!((o.len(), o.rate()), (w.len(), w.rate()));
                assert!(o.samples().iter().all(|s| (-1.0..=1.0).contains(s)));
            }
        }
    }

    #[test]
    fn sample_without_waveform_is_an_error() {
        let aug = AudioAugmenter::new(AugmentKind::Pitch, LogMelConfig::default(), 10);
        let s = Sample::new(crate::tensor::Tensor::zeros(&[2, 2], crate::DType::F32), 0, "x");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(aug.augment(&s, &mut rng).is_err());
    }

    #[test]
    fn augmented_sample_is_refeaturized() {
        let mel = LogMelConfig {
            bins: 16,
            window: 512,
            hop: 256,
            fft: 512,
        };
        let w = tone();
        let mut s = Sample::new(fit_frames(&log_mel(&w, &mel).unwrap(), 20).unwrap(), 3, "tone");
        s.waveform = Some(Arc::new(w));
        let aug = AudioAugmenter::new(AugmentKind::Equalizer, mel, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = aug.augment(&s, &mut rng).unwrap();
        assert_eq!(out.features.shape(), &[16, 20]);
        assert_eq!((out.class_id, out.source_id.as_str()), (3, "tone"));
        assert_ne!(out.features, s.features);
    }
}
