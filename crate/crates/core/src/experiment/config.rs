//! Run configuration: a flat `key = value` text format. Blank lines and
//! `#` comments are ignored; later assignments win, so command-line
//! overrides are applied as extra pairs after the file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::audio::{LogMelConfig, SynthTaskSpec};
use crate::augment::AugmentKind;
use crate::episodes::Scheme;
use crate::error::{Error, Result};
use crate::learners::{Distance, HeadConfig, HeadKind};
use crate::metaopt::{CurvatureMode, MetaConfig, MetaKind, OptimizerKind};
use crate::nn::BackboneKind;
use crate::tensor::DType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Synthetic,
    Environmental,
    Speech,
    Music,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "environmental" => Ok(Self::Environmental),
            "speech" => Ok(Self::Speech),
            "music" => Ok(Self::Music),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Synthetic => "synthetic",
            Self::Environmental => "environmental",
            Self::Speech => "speech",
            Self::Music => "music",
        }
    }

    /// Train/val/test class counts of the real-dataset splits.
    pub fn split_counts(self) -> Option<[usize; 3]> {
        match self {
            Self::Synthetic => None,
            Self::Environmental => Some([35, 5, 10]),
            Self::Speech => Some([25, 7, 8]),
            Self::Music => Some([4, 0, 4]),
        }
    }

    /// Clip length after loading, in seconds.
    pub fn clip_seconds(self) -> f64 {
        match self {
            Self::Synthetic => 0.5,
            Self::Environmental => 5.0,
            Self::Speech => 1.0,
            Self::Music => 3.0,
        }
    }

    /// Inner learning rate. The synthetic preset uses a smaller step that
    /// suits its narrow backbone and small inputs.
    pub fn default_alpha(self) -> f64 {
        match self {
            Self::Speech => 0.02,
            Self::Environmental | Self::Music => 0.2,
            Self::Synthetic => 1e-3,
        }
    }

    pub fn default_way(self) -> usize {
        match self {
            Self::Music => 3,
            _ => 5,
        }
    }

    pub fn default_augment(self) -> AugmentKind {
        match self {
            Self::Environmental => AugmentKind::Pitch,
            _ => AugmentKind::Equalizer,
        }
    }

    /// No validation classes: pick the checkpoint by training accuracy.
    pub fn selects_on_training(self) -> bool {
        self == Self::Music
    }
}

/// Parameters of the synthetic harmonic-tone dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub train_classes: usize,
    pub val_classes: usize,
    pub per_class: usize,
    pub base_hz: f64,
    pub span: usize,
    pub harmonics: usize,
    pub jitter_cents: f64,
    pub jitter_db: f64,
    pub noise_db: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 28,
            train_classes: 20,
            val_classes: 0,
            per_class: 30,
            base_hz: 110.0,
            span: 36,
            harmonics: 6,
            jitter_cents: 60.0,
            jitter_db: 6.0,
            noise_db: Some(-25.0),
        }
    }
}

impl SynthConfig {
    pub fn task_spec<R: rand::Rng + ?Sized>(&self, seconds: f64, rate: u32, rng: &mut R) -> Result<SynthTaskSpec> {
        let mut spec = SynthTaskSpec::random(self.classes, self.base_hz, self.span, self.harmonics, rng)?;
        spec.jitter_cents = self.jitter_cents;
        spec.jitter_db = self.jitter_db;
        spec.noise_db = self.noise_db;
        spec.seconds = seconds;
        spec.rate = rate;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub manifest: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub way: usize,
    pub shot: usize,
    pub queries: usize,
    pub head: HeadKind,
    pub distance: Distance,
    pub tau: f64,
    pub lambda: f64,
    pub backbone: BackboneKind,
    pub widths: Vec<usize>,
    pub scheme: Scheme,
    pub augment: AugmentKind,
    pub meta: MetaKind,
    pub curvature: CurvatureMode,
    pub freeze_curvature: bool,
    alpha: Option<f64>,
    pub beta: f64,
    pub rounds: usize,
    pub second_order: bool,
    pub optimizer: OptimizerKind,
    pub clip: Option<f64>,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub eval_split: String,
    pub seed: u64,
    pub data_seed: u64,
    pub output: PathBuf,
    pub dtype: DType,
    pub rate: u32,
    pub seconds: f64,
    pub mel: LogMelConfig,
    pub synth: SynthConfig,
}

/// Documented keys, in the order they are written back out.
pub const KEYS: &[&str] = &[
    "preset",
    "manifest",
    "cache",
    "way",
    "shot",
    "queries",
    "head",
    "distance",
    "tau",
    "lambda",
    "backbone",
    "widths",
    "scheme",
    "augment",
    "meta",
    "curvature",
    "freeze_curvature",
    "alpha",
    "beta",
    "rounds",
    "second_order",
    "optimizer",
    "clip",
    "train_episodes",
    "eval_episodes",
    "eval_split",
    "seed",
    "data_seed",
    "output",
    "dtype",
    "rate",
    "seconds",
    "mel_bins",
    "mel_window",
    "mel_hop",
    "mel_fft",
    "synth_classes",
    "synth_train_classes",
    "synth_val_classes",
    "synth_per_class",
    "synth_base_hz",
    "synth_span",
    "synth_harmonics",
    "synth_jitter_cents",
    "synth_jitter_db",
    "synth_noise_db",
];

/// Splits text into `(line, key, value)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn field(key: &str, e: Error) -> Error {
    match e {
        Error::Config(m) if !m.starts_with(key) => Error::Config(format!("{key}: {m}")),
        other => other,
    }
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let synthetic = preset == Preset::Synthetic;
        let mel = if synthetic {
            LogMelConfig {
                bins: 16,
                window: 512,
                hop: 480,
                fft: 512,
            }
        } else {
            LogMelConfig::default()
        };
        Self {
            preset,
            manifest: None,
            cache: None,
            way: preset.default_way(),
            shot: 5,
            queries: 5,
            head: HeadKind::Pn,
            distance: Distance::SquaredEuclidean,
            tau: 0.1,
            lambda: 1.0,
            backbone: BackboneKind::Conv4,
            widths: if synthetic { vec![8; 4] } else { BackboneKind::Conv4.default_widths() },
            scheme: Scheme::Adft,
            augment: AugmentKind::None,
            meta: MetaKind::Mc,
            curvature: CurvatureMode::Diagonal,
            freeze_curvature: false,
            alpha: None,
            beta: 1e-3,
            rounds: 8,
            second_order: true,
            optimizer: OptimizerKind::Sgd,
            clip: Some(10.0),
            train_episodes: 2000,
            eval_episodes: 1000,
            eval_split: "test".into(),
            seed: 0,
            data_seed: 0,
            output: PathBuf::from("runs"),
            dtype: DType::F32,
            rate: 16000,
            seconds: preset.clip_seconds(),
            mel,
            synth: SynthConfig::default(),
        }
    }

    /// Builds a config from pairs. The last `preset` assignment picks the
    /// defaults; all other keys then apply in order.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<Self> {
        let preset = pairs
            .iter()
            .rev()
            .find(|(k, _)| k.as_ref() == "preset")
            .map(|(_, v)| Preset::parse(v.as_ref()))
            .transpose()?
            .unwrap_or(Preset::Synthetic);
        let mut cfg = Self::for_preset(preset);
        for (k, v) in pairs {
            cfg.set(k.as_ref(), v.as_ref())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = Vec::new();
        for (line, k, v) in parse_pairs(text)? {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("line {line}: unknown key {k:?}")));
            }
            pairs.push((k, v));
        }
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "preset" => self.preset = Preset::parse(v)?,
            "manifest" => self.manifest = (v != "none").then(|| PathBuf::from(v)),
            "cache" => self.cache = (v != "none").then(|| PathBuf::from(v)),
            "way" => self.way = num(key, v)?,
            "shot" => self.shot = num(key, v)?,
            "queries" => self.queries = num(key, v)?,
            "head" => self.head = HeadKind::parse(v).map_err(|e| field(key, e))?,
            "distance" => self.distance = Distance::parse(v).map_err(|e| field(key, e))?,
            "tau" => self.tau = num(key, v)?,
            "lambda" => self.lambda = num(key, v)?,
            "backbone" => {
                self.backbone = BackboneKind::parse(v).map_err(|e| field(key, e))?;
                if self.preset != Preset::Synthetic {
                    self.widths = self.backbone.default_widths();
                }
            }
            "widths" => {
                self.widths = v
                    .split(',')
                    .map(|w| num(key, w.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "scheme" => self.scheme = Scheme::parse(v).map_err(|e| field(key, e))?,
            "augment" => {
                self.augment = if v == "preset" {
                    self.preset.default_augment()
                } else {
                    AugmentKind::parse(v).map_err(|e| field(key, e))?
                }
            }
            "meta" => self.meta = MetaKind::parse(v).map_err(|e| field(key, e))?,
            "curvature" => self.curvature = CurvatureMode::parse(v).map_err(|e| field(key, e))?,
            "freeze_curvature" => self.freeze_curvature = flag(key, v)?,
            "alpha" => self.alpha = if v == "preset" { None } else { Some(num(key, v)?) },
            "beta" => self.beta = num(key, v)?,
            "rounds" => self.rounds = num(key, v)?,
            "second_order" => self.second_order = flag(key, v)?,
            "optimizer" => self.optimizer = OptimizerKind::parse(v).map_err(|e| field(key, e))?,
            "clip" => self.clip = opt_num(key, v)?,
            "train_episodes" => self.train_episodes = num(key, v)?,
            "eval_episodes" => self.eval_episodes = num(key, v)?,
            "eval_split" => self.eval_split = v.to_string(),
            "seed" => self.seed = num(key, v)?,
            "data_seed" => self.data_seed = num(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "dtype" => {
                self.dtype =
                    DType::from_name(v).ok_or_else(|| Error::Config(format!("{key}: unknown dtype {v:?}")))?
            }
            "rate" => self.rate = num(key, v)?,
            "seconds" => self.seconds = num(key, v)?,
            "mel_bins" => self.mel.bins = num(key, v)?,
            "mel_window" => self.mel.window = num(key, v)?,
            "mel_hop" => self.mel.hop = num(key, v)?,
            "mel_fft" => self.mel.fft = num(key, v)?,
            "synth_classes" => self.synth.classes = num(key, v)?,
            "synth_train_classes" => self.synth.train_classes = num(key, v)?,
            "synth_val_classes" => self.synth.val_classes = num(key, v)?,
            "synth_per_class" => self.synth.per_class = num(key, v)?,
            "synth_base_hz" => self.synth.base_hz = num(key, v)?,
            "synth_span" => self.synth.span = num(key, v)?,
            "synth_harmonics" => self.synth.harmonics = num(key, v)?,
            "synth_jitter_cents" => self.synth.jitter_cents = num(key, v)?,
            "synth_jitter_db" => self.synth.jitter_db = num(key, v)?,
            "synth_noise_db" => self.synth.noise_db = opt_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Inner learning rate, resolved against the preset default.
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| self.preset.default_alpha())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: String| Err(Error::Config(format!("{k}: {m}")));
        if self.way < 2 {
            return bad("way", format!("need at least 2 classes per episode, got {}", self.way));
        }
        if self.shot == 0 || self.queries == 0 {
            return bad("shot", "shot and queries must be positive".into());
        }
        if self.scheme != Scheme::None && self.shot < 2 {
            return bad(
                "shot",
                format!("scheme {} needs at least 2 shots, got {}", self.scheme, self.shot),
            );
        }
        if self.augment != AugmentKind::None && self.scheme != Scheme::Adft {
            return bad(
                "augment",
                format!("augmentation {} requires scheme adft, got {}", self.augment.name(), self.scheme),
            );
        }
        if self.preset != Preset::Synthetic && self.manifest.is_none() && self.cache.is_none() {
            return bad("manifest", format!("preset {} needs a manifest or cache", self.preset.name()));
        }
        if !["train", "val", "test"].contains(&self.eval_split.as_str()) {
            return bad("eval_split", format!("expected train, val or test, got {:?}", self.eval_split));
        }
        if self.widths.len() != 4 || self.widths.contains(&0) {
            return bad("widths", format!("expected 4 positive widths, got {:?}", self.widths));
        }
        if self.rate == 0 || !(self.seconds > 0.0) {
            return bad("seconds", "rate and clip length must be positive".into());
        }
        if self.preset == Preset::Synthetic {
            let s = &self.synth;
            if s.train_classes + s.val_classes >= s.classes {
                return bad(
                    "synth_classes",
                    format!(
                        "{} classes leave no test classes after {} train and {} val",
                        s.classes, s.train_classes, s.val_classes
                    ),
                );
            }
        }
        self.mel.validate().map_err(|e| field("mel", e))?;
        HeadConfig {
            kind: self.head,
            distance: self.distance,
            tau: self.tau,
            lambda: self.lambda,
        }
        .validate()
        .map_err(|e| field("head", e))?;
        self.meta_config().validate().map_err(|e| field("meta", e))
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            kind: self.head,
            distance: self.distance,
            tau: self.tau,
            lambda: self.lambda,
        }
    }

    pub fn meta_config(&self) -> MetaConfig {
        MetaConfig {
            meta: self.meta,
            curvature: self.curvature,
            scheme: self.scheme,
            alpha: self.alpha(),
            beta: self.beta,
            rounds: self.rounds,
            second_order: self.second_order,
            optimizer: self.optimizer,
            clip: self.clip,
            freeze_curvature: self.freeze_curvature,
        }
    }

    /// Resolved `key = value` pairs in [`KEYS`] order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let s = &self.synth;
        let values = [
            self.preset.name().to_string(),
            path(&self.manifest),
            path(&self.cache),
            self.way.to_string(),
            self.shot.to_string(),
            self.queries.to_string(),
            self.head.name().to_string(),
            self.distance.name().to_string(),
            self.tau.to_string(),
            self.lambda.to_string(),
            self.backbone.name().to_string(),
            self.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            self.scheme.name().to_string(),
            self.augment.name().to_string(),
            self.meta.name().to_string(),
            self.curvature.name().to_string(),
            self.freeze_curvature.to_string(),
            self.alpha().to_string(),
            self.beta.to_string(),
            self.rounds.to_string(),
            self.second_order.to_string(),
            self.optimizer.name().to_string(),
            opt(self.clip),
            self.train_episodes.to_string(),
            self.eval_episodes.to_string(),
            self.eval_split.clone(),
            self.seed.to_string(),
            self.data_seed.to_string(),
            self.output.display().to_string(),
            self.dtype.name().to_string(),
            self.rate.to_string(),
            self.seconds.to_string(),
            self.mel.bins.to_string(),
            self.mel.window.to_string(),
            self.mel.hop.to_string(),
            self.mel.fft.to_string(),
            s.classes.to_string(),
            s.train_classes.to_string(),
            s.val_classes.to_string(),
            s.per_class.to_string(),
            s.base_hz.to_string(),
            s.span.to_string(),
            s.harmonics.to_string(),
            s.jitter_cents.to_string(),
            s.jitter_db.to_string(),
            opt(s.noise_db),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
