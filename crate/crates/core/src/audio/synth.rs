//! Jittered harmonic tones as a small stand-in for real audio datasets.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mel::{log_mel, LogMelConfig};
use super::Waveform;
use crate::episodes::{Sample, SamplePool};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub fundamental: f64,
    /// Linear amplitude of harmonic `h+1`.
    pub harmonics: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTaskSpec {
    pub classes: Vec<ClassTemplate>,
    /// Fundamental jitter, ± cents, uniform.
    pub jitter_cents: f64,
    /// Per-harmonic amplitude jitter, ± dB, uniform.
    pub jitter_db: f64,
    /// Gaussian noise floor in dBFS; `None` renders clean tones.
    pub noise_db: Option<f64>,
    pub seconds: f64,
    pub rate: u32,
}

impl SynthTaskSpec {
    /// `n_classes` templates with fundamentals on distinct semitones above
    /// `base_hz` (drawn from a span of `span` semitones) and random timbres
    /// of `n_harmonics` partials.
    pub fn random<R: Rng + ?Sized>(
        n_classes: usize,
        base_hz: f64,
        span: usize,
        n_harmonics: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_classes > span {
            return Err(Error::Config(format!(
                "{n_classes} classes need a span of at least {n_classes} semitones, got {span}"
            )));
        }
        let mut steps = index::sample(rng, span, n_classes).into_vec();
        steps.sort_unstable();
        let classes = steps
            .into_iter()
            .map(|s| ClassTemplate {
                fundamental: base_hz * 2f64.powf(s as f64 / 12.0),
                harmonics: (1..=n_harmonics).map(|h| rng.gen_range(0.1..1.0) / h as f64).collect(),
            })
            .collect();
        // Class order is by pitch; shuffle templates so class ids do not
        // encode pitch rank.
        let mut spec = Self {
            classes,
            jitter_cents: 30.0,
            jitter_db: 3.0,
            noise_db: Some(-40.0),
            seconds: 0.5,
            rate: 16000,
        };
        let order = index::sample(rng, n_classes, n_classes).into_vec();
        spec.classes = order.into_iter().map(|i| spec.classes[i].clone()).collect();
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("synthetic task needs at least 2 classes".into()));
        }
        let nyquist = self.rate as f64 / 2.0;
        for (i, c) in self.classes.iter().enumerate() {
            if !(c.fundamental > 0.0 && c.fundamental < nyquist) || c.harmonics.is_empty() {
                return Err(Error::Config(format!("class {i} template is not renderable")));
            }
            for (j, d) in self.classes.iter().enumerate().skip(i + 1) {
                let semis = 12.0 * (c.fundamental / d.fundamental).log2().abs();
                if semis < 1.0 - 1e-9 {
                    return Err(Error::Config(format!(
                        "classes {i} and {j} are {semis:.3} semitones apart (need ≥ 1)"
                    )));
                }
            }
        }
        if !(self.seconds > 0.0) || self.jitter_cents < 0.0 || self.jitter_db < 0.0 {
            return Err(Error::Config("synthetic task has a negative jitter or duration".into()));
        }
        Ok(())
    }

    /// Renders one clip of class `class`.
    pub fn render<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> Result<Waveform> {
        let t = &self.classes[class];
        let n = (self.seconds * self.rate as f64).round() as usize;
        let f0 = t.fundamental * 2f64.powf(self.jitter_cents * (rng.gen::<f64>() * 2.0 - 1.0) / 1200.0);
        let gains: Vec<f64> = t
            .harmonics
            .iter()
            .map(|a| a * 10f64.powf(self.jitter_db * (rng.gen::<f64>() * 2.0 - 1.0) / 20.0))
            .collect();
        let norm: f64 = 0.5 / gains.iter().sum::<f64>();
        let nyquist = self.rate as f64 / 2.0;
        let mut x = vec![0.0; n];
        for (h, g) in gains.iter().enumerate() {
            let f = f0 * (h + 1) as f64;
            if f >= nyquist {
                break;
            }
            let w = 2.0 * PI * f / self.rate as f64;
            for (i, v) in x.iter_mut().enumerate() {
                *v += norm * g * (w * i as f64).sin();
            }
        }
        if let Some(db) = self.noise_db {
            let sd = 10f64.powf(db / 20.0);
            for v in &mut x {
                let z: f64 = StandardNormal.sample(rng);
                *v += sd * z;
            }
        }
        Waveform::from_f64(&x, self.rate)
    }
}

/// Renders `per_class` clips for every class and featurizes them. Source
/// ids are `synth:<class>:<index>`.
pub fn synth_dataset<R: Rng + ?Sized>(
    spec: &SynthTaskSpec,
    per_class: usize,
    mel: &LogMelConfig,
    keep_waveforms: bool,
    rng: &mut R,
) -> Result<SamplePool> {
    spec.validate()?;
    let jobs: Vec<(usize, usize, u64)> = (0..spec.classes.len())
        .flat_map(|c| (0..per_class).map(move |i| (c, i)))
        .map(|(c, i)| (c, i, rng.gen()))
        .collect();
    let samples = jobs
        .into_par_iter()
        .map(|(c, i, seed)| {
            let w = spec.render(c, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let mut s = Sample::new(log_mel(&w, mel)?, c, format!("synth:{c}:{i}"));
            if keep_waveforms {
                s.waveform = Some(Arc::new(w));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    SamplePool::from_samples(samples)
}
