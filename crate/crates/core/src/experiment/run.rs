//! Training and evaluation runs and their on-disk artifacts.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Preset, RunConfig};
use super::dataset::{load_cache, prepare, LoadedData, Split, SplitAssignment};
use crate::audio::synth_dataset;
use crate::augment::{AudioAugmenter, AugmentKind};
use crate::episodes::{sample_episode, SamplePool};
use crate::error::{Error, Result};
use crate::evalharness::{evaluate_suite, render_table, write_records, EvalRecord, Summary};
use crate::learners::Model;
use crate::metaopt::{MetaLearner, SharedAugmenter, StepReport};
use crate::nn::{checkpoint, BackboneSpec};
use crate::tensor::Tensor;

pub const VERSION: &str = concat!("epift ", env!("CARGO_PKG_VERSION"));

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const RUN_MANIFEST_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "table.txt";

/// Window of the training-accuracy moving average used for model
/// selection on splits without validation classes.
pub const SELECTION_WINDOW: usize = 100;

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub classes: Vec<String>,
    pub splits: SplitAssignment,
    pub frames: usize,
    /// Training step whose parameters were kept, when selection applies.
    pub selected_step: Option<usize>,
    pub checkpoint_sha256: Option<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn synthetic_data(cfg: &RunConfig, keep_waveforms: bool) -> Result<LoadedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
    let spec = cfg.synth.task_spec(cfg.seconds, cfg.rate, &mut rng)?;
    let pool = synth_dataset(&spec, cfg.synth.per_class, &cfg.mel, keep_waveforms, &mut rng)?;
    let classes: Vec<String> = (0..cfg.synth.classes).map(|c| format!("tone{c:02}")).collect();
    let (t, v) = (cfg.synth.train_classes, cfg.synth.val_classes);
    let ranges = [0..t, t..t + v, t + v..cfg.synth.classes];
    let mut splits = SplitAssignment::default();
    splits.train = classes[ranges[0].clone()].to_vec();
    splits.val = classes[ranges[1].clone()].to_vec();
    splits.test = classes[ranges[2].clone()].to_vec();
    let pools = Split::ALL
        .into_iter()
        .zip(ranges)
        .map(|(s, r)| (s, pool.restrict(&r.collect::<Vec<_>>())))
        .collect();
    Ok(LoadedData { classes, splits, pools })
}

/// Loads the configured dataset: synthesizes it, or prepares (idempotent)
/// and reads the feature cache.
pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    let keep = cfg.augment != AugmentKind::None;
    if cfg.preset == Preset::Synthetic {
        return synthetic_data(cfg, keep);
    }
    let cache = cfg.cache.clone().unwrap_or_else(|| cfg.output.join("cache"));
    if let Some(m) = &cfg.manifest {
        let report = prepare(m, cfg, &cache)?;
        if !report.errors.is_empty() {
            log::warn!("{} files failed to load; see the errors report", report.errors.len());
        }
    }
    load_cache(&cache, keep, cfg.rate)
}

fn frames_of(pool: &SamplePool) -> Result<(usize, usize)> {
    let s = pool
        .iter()
        .next()
        .ok_or_else(|| Error::Data("training split is empty".into()))?;
    match s.features.shape() {
        &[bins, frames] => Ok((bins, frames)),
        other => Err(Error::Data(format!("features must be bins × frames, got {other:?}"))),
    }
}

/// Model, learner and augmenter for a config and dataset. The learner's
/// parameters are initialized from `rng`.
pub fn build_learner(cfg: &RunConfig, data: &LoadedData, rng: &mut ChaCha8Rng) -> Result<MetaLearner> {
    let (bins, frames) = frames_of(data.pool(Split::Train))?;
    let head = cfg.head_config();
    let bb = BackboneSpec::new(cfg.backbone, bins, frames, head.kind.layout()).with_widths(cfg.widths.clone());
    let model = Model::new(bb, head, data.class_ids(Split::Train))?;
    let augmenter: Option<SharedAugmenter> = (cfg.augment != AugmentKind::None)
        .then(|| AudioAugmenter::new(cfg.augment, cfg.mel.clone(), frames) as SharedAugmenter);
    Ok(MetaLearner::init(model, cfg.meta_config(), rng, cfg.dtype)?.with_augmenter(augmenter))
}

/// RNG for initialization and training episodes (stream 1 of the run seed).
pub fn training_rng(cfg: &RunConfig) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    rng
}

#[derive(Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub reports: Vec<StepReport>,
    pub selected_step: Option<usize>,
    pub learner: MetaLearner,
}

/// Meta-trains for `cfg.train_episodes` episodes and writes the
/// checkpoint, run manifest, resolved config and loss log to `cfg.output`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let mut rng = training_rng(cfg);
    let mut learner = build_learner(cfg, &data, &mut rng)?;
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let select = cfg.preset.selects_on_training();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(SELECTION_WINDOW);
    let mut best: Option<(f64, usize, Vec<(String, Tensor)>)> = None;
    let mut log = String::from("step,loss,accuracy,inner_steps,augment_fallbacks\n");
    let mut reports = Vec::with_capacity(cfg.train_episodes);
    let train_pool = data.pool(Split::Train);
    for step in 0..cfg.train_episodes {
        let episode = sample_episode(train_pool, cfg.way, cfg.shot, cfg.queries, &mut rng)?;
        let r = match learner.meta_step(&episode, &mut rng) {
            Ok(r) => r,
            Err(e) => {
                log::error!("training step {step}: {e}");
                write_file(&dir.join(LOSS_LOG_FILE), log.as_bytes())?;
                return Err(e);
            }
        };
        let _ = writeln!(
            log,
            "{step},{:?},{:?},{},{}",
            r.loss, r.accuracy, r.inner_steps, r.augment_fallbacks
        );
        if select {
            if window.len() == SELECTION_WINDOW {
                window.pop_front();
            }
            window.push_back(r.accuracy);
            if window.len() == SELECTION_WINDOW {
                let ma = window.iter().sum::<f64>() / SELECTION_WINDOW as f64;
                if best.as_ref().map_or(true, |b| ma > b.0) {
                    best = Some((ma, step, learner.checkpoint_entries()));
                }
            }
        }
        reports.push(r);
    }
    let (entries, selected_step) = match best {
        Some((_, step, entries)) => {
            learner.load_entries(entries.clone())?;
            (entries, Some(step))
        }
        None => (learner.checkpoint_entries(), None),
    };
    let bytes = checkpoint::encode(&entries);
    write_file(&dir.join(CHECKPOINT_FILE), &bytes)?;
    write_file(&dir.join(LOSS_LOG_FILE), log.as_bytes())?;
    write_file(&dir.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    let manifest = RunManifest {
        version: VERSION.to_string(),
        command: "train".into(),
        config: cfg.pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        classes: data.classes.clone(),
        splits: data.splits.clone(),
        frames: frames_of(train_pool)?.1,
        selected_step,
        checkpoint_sha256: Some(sha256_hex(&bytes)),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&dir.join(RUN_MANIFEST_FILE), json.as_bytes())?;
    Ok(TrainOutcome {
        dir,
        reports,
        selected_step,
        learner,
    })
}

/// Keys that must agree between a checkpoint's training run and the
/// evaluation config.
pub const MODEL_KEYS: &[&str] = &["head", "backbone", "widths", "meta", "curvature", "mel_bins"];

/// Checks the run manifest next to `ckpt` (when present) against `cfg`.
pub fn check_compatible(cfg: &RunConfig, ckpt: &Path) -> Result<()> {
    let path = ckpt.with_file_name(RUN_MANIFEST_FILE);
    let Ok(text) = std::fs::read_to_string(&path) else {
        return Ok(());
    };
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let ours: BTreeMap<&str, String> = cfg.pairs().into_iter().collect();
    for k in MODEL_KEYS {
        if let Some(theirs) = manifest.config.get(*k) {
            if theirs != &ours[k] {
                return Err(Error::Config(format!(
                    "{k}: checkpoint was trained with {theirs}, config says {}",
                    ours[k]
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub records: Vec<EvalRecord>,
    pub summary: Summary,
    pub table: String,
}

pub fn run_label(cfg: &RunConfig) -> String {
    format!("{}-{}-{}", cfg.meta.name(), cfg.head.name(), cfg.scheme.name())
}

/// Evaluates a checkpoint on `cfg.eval_episodes` episodes from the
/// configured split and writes records, summary and (optionally) table.
pub fn evaluate(cfg: &RunConfig, ckpt: &Path, write_table: bool) -> Result<EvalOutcome> {
    cfg.validate()?;
    check_compatible(cfg, ckpt)?;
    let entries = checkpoint::read(ckpt)?;
    let data = load_data(cfg)?;
    let mut rng = training_rng(cfg);
    let mut learner = build_learner(cfg, &data, &mut rng)?;
    learner.load_entries(entries)?;
    let split = Split::parse(&cfg.eval_split)?;
    let pool = data.pool(split);
    let (records, summary) = evaluate_suite(&learner, cfg.eval_episodes, cfg.seed, |_, rng| {
        sample_episode(pool, cfg.way, cfg.shot, cfg.queries, rng)
    })?;
    let dir = &cfg.output;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = Vec::new();
    write_records(&records, &mut csv).map_err(|e| Error::io(dir.join(RECORDS_FILE), e))?;
    write_file(&dir.join(RECORDS_FILE), &csv)?;
    write_file(&dir.join(SUMMARY_FILE), (summary.to_json() + "\n").as_bytes())?;
    let label = run_label(cfg);
    let table = render_table(&[(label.as_str(), &summary)], None);
    if write_table {
        write_file(&dir.join(TABLE_FILE), table.as_bytes())?;
    }
    Ok(EvalOutcome { records, summary, table })
}
