//! Dataset manifests, class splits and the on-disk feature cache.
//!
//! A manifest is a CSV with header `filepath,class-name,split`. The split
//! column is either filled on every row (`train`, `val` or `test`) or left
//! empty everywhere, in which case classes are assigned by preset: sorted
//! by name, shuffled under a fixed seed, then cut into the preset's
//! train/val/test counts.
//!
//! The cache directory holds `index.csv`
//! (`filepath,class-name,split,hash`), one checkpoint-format file per
//! sample under `features/<hash>.ckpt` with `features` and `waveform`
//! tensors, `splits.json` and, when files failed, `errors.csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Preset, RunConfig};
use crate::audio::{decode_wav, fix_duration, log_mel, resample, LogMelConfig, Waveform};
use crate::episodes::{Sample, SamplePool};
use crate::error::{Error, Result};
use crate::nn::checkpoint;
use crate::tensor::{DType, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" | "valid" | "validation" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            _ => Err(Error::Data(format!("unknown split {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub class: String,
    pub split: Option<Split>,
}

/// Class names per split, sorted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn get(&self, s: Split) -> &[String] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    pub fn split_of(&self, class: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|&s| self.get(s).iter().any(|c| c == class))
    }

    fn push(&mut self, s: Split, class: String) {
        match s {
            Split::Train => self.train.push(class),
            Split::Val => self.val.push(class),
            Split::Test => self.test.push(class),
        }
    }

    fn sort(&mut self) {
        self.train.sort();
        self.val.sort();
        self.test.sort();
    }
}

/// Reads a manifest; relative file paths resolve against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            offset: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 || header[0] != "filepath" || header[1] != "class-name" {
        return Err(Error::Parse {
            offset: 0,
            message: "expected header filepath,class-name,split".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            offset: e.position().map_or(0, |p| p.byte() as usize),
            message: e.to_string(),
        })?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        let (file, class) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        if file.is_empty() || class.is_empty() {
            return Err(Error::Parse {
                offset,
                message: "empty filepath or class-name".into(),
            });
        }
        let split = match rec.get(2).unwrap_or("") {
            "" => None,
            s => Some(Split::parse(s).map_err(|_| Error::Parse {
                offset,
                message: format!("unknown split {s:?}"),
            })?),
        };
        let p = Path::new(file);
        rows.push(ManifestRow {
            path: if p.is_absolute() { p.to_path_buf() } else { base.join(p) },
            class: class.to_string(),
            split,
        });
    }
    Ok(rows)
}

/// Uses the manifest's split column when every row has one, otherwise
/// assigns classes by preset.
pub fn assign_splits(rows: &[ManifestRow], preset: Preset, seed: u64) -> Result<SplitAssignment> {
    let given = rows.iter().filter(|r| r.split.is_some()).count();
    let mut out = SplitAssignment::default();
    if given == rows.len() && given > 0 {
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for r in rows {
            let s = r.split.expect("checked");
            if let Some(prev) = seen.insert(&r.class, s) {
                if prev != s {
                    return Err(Error::Data(format!("class {:?} appears in two splits", r.class)));
                }
            }
        }
        for (c, s) in seen {
            out.push(s, c.to_string());
        }
        out.sort();
        return Ok(out);
    }
    if given != 0 {
        return Err(Error::Data("split column must be filled on every row or on none".into()));
    }
    let counts = preset
        .split_counts()
        .ok_or_else(|| Error::Config(format!("preset {} has no class split", preset.name())))?;
    let mut classes: Vec<String> = rows.iter().map(|r| r.class.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() != counts.iter().sum::<usize>() {
        return Err(Error::Data(format!(
            "preset {} expects {} classes, manifest has {}",
            preset.name(),
            counts.iter().sum::<usize>(),
            classes.len()
        )));
    }
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut it = classes.into_iter();
    for (s, n) in Split::ALL.into_iter().zip(counts) {
        for c in it.by_ref().take(n) {
            out.push(s, c);
        }
    }
    out.sort();
    Ok(out)
}

/// Loading pipeline shared by preparation and augmentation preview.
pub fn featurize(bytes: &[u8], rate: u32, seconds: f64, mel: &LogMelConfig) -> Result<(Waveform, Tensor)> {
    let w = decode_wav(bytes)?;
    let w = fix_duration(&resample(&w, rate)?, seconds)?;
    let f = log_mel(&w, mel)?;
    Ok((w, f))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn pipeline_tag(cfg: &RunConfig) -> String {
    format!(
        "rate={} seconds={} mel={},{},{},{}",
        cfg.rate, cfg.seconds, cfg.mel.bins, cfg.mel.window, cfg.mel.hop, cfg.mel.fft
    )
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrepareReport {
    pub written: usize,
    pub reused: usize,
    pub errors: Vec<(PathBuf, String)>,
    pub splits: SplitAssignment,
}

pub const INDEX_FILE: &str = "index.csv";
pub const SPLITS_FILE: &str = "splits.json";
pub const ERRORS_FILE: &str = "errors.csv";

/// Featurizes every manifest row into `cache`. Files whose content hash
/// already has a cache entry are skipped; unreadable files are listed in
/// the errors report and the run continues.
pub fn prepare(manifest: &Path, cfg: &RunConfig, cache: &Path) -> Result<PrepareReport> {
    let rows = read_manifest(manifest)?;
    if rows.is_empty() {
        return Err(Error::Usage(format!("manifest {} lists no files", manifest.display())));
    }
    let splits = assign_splits(&rows, cfg.preset, cfg.data_seed)?;
    let feat_dir = cache.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let tag = pipeline_tag(cfg);

    enum Outcome {
        Written(String),
        Reused(String),
        Failed(String),
    }
    let outcomes: Vec<Outcome> = rows
        .par_iter()
        .map(|row| {
            let bytes = match std::fs::read(&row.path) {
                Ok(b) => b,
                Err(e) => return Outcome::Failed(e.to_string()),
            };
            let mut h = Sha256::new();
            h.update(tag.as_bytes());
            h.update(&bytes);
            let hash = hex(&h.finalize());
            let file = feat_dir.join(format!("{hash}.ckpt"));
            if file.exists() {
                return Outcome::Reused(hash);
            }
            match featurize(&bytes, cfg.rate, cfg.seconds, &cfg.mel) {
                Ok((w, f)) => {
                    let wave = Tensor::from_f32(&[w.len()], w.samples()).expect("shape matches");
                    let entries = vec![("features".to_string(), f), ("waveform".to_string(), wave)];
                    match checkpoint::write(&file, &entries) {
                        Ok(()) => Outcome::Written(hash),
                        Err(e) => Outcome::Failed(e.to_string()),
                    }
                }
                Err(e) => Outcome::Failed(e.to_string()),
            }
        })
        .collect();

    let mut report = PrepareReport {
        splits,
        ..Default::default()
    };
    let mut index = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Data(e.to_string());
    index.write_record(["filepath", "class-name", "split", "hash"]).map_err(io)?;
    for (row, out) in rows.iter().zip(outcomes) {
        let hash = match out {
            Outcome::Written(h) => {
                report.written += 1;
                h
            }
            Outcome::Reused(h) => {
                report.reused += 1;
                h
            }
            Outcome::Failed(msg) => {
                log::warn!("{}: {msg}", row.path.display());
                report.errors.push((row.path.clone(), msg));
                continue;
            }
        };
        let split = report.splits.split_of(&row.class).expect("every class is assigned");
        index
            .write_record([&row.path.display().to_string(), &row.class, split.name(), &hash])
            .map_err(io)?;
    }
    let index = index.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_if_changed(&cache.join(INDEX_FILE), &index)?;
    let splits_json = serde_json::to_string_pretty(&report.splits).expect("splits serialize") + "\n";
    write_if_changed(&cache.join(SPLITS_FILE), splits_json.as_bytes())?;
    let errors_path = cache.join(ERRORS_FILE);
    if report.errors.is_empty() {
        if errors_path.exists() {
            std::fs::remove_file(&errors_path).map_err(|e| Error::io(&errors_path, e))?;
        }
    } else {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["filepath", "error"]).map_err(io)?;
        for (p, m) in &report.errors {
            w.write_record([&p.display().to_string(), m]).map_err(io)?;
        }
        write_if_changed(&errors_path, &w.into_inner().map_err(|e| Error::Data(e.to_string()))?)?;
    }
    Ok(report)
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if std::fs::read(path).ok().as_deref() == Some(bytes) {
        return Ok(());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Sample pools per split, with class ids indexing `classes`.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub classes: Vec<String>,
    pub splits: SplitAssignment,
    pub pools: BTreeMap<Split, SamplePool>,
}

impl LoadedData {
    pub fn pool(&self, s: Split) -> &SamplePool {
        &self.pools[&s]
    }

    pub fn class_ids(&self, s: Split) -> Vec<usize> {
        self.pool(s).class_ids()
    }
}

/// Reads a prepared cache. Waveforms are attached when `keep_waveforms`.
pub fn load_cache(cache: &Path, keep_waveforms: bool, rate: u32) -> Result<LoadedData> {
    let index_path = cache.join(INDEX_FILE);
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            offset: e.position().map_or(0, |p| p.byte() as usize),
            message: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(Error::Parse {
                offset: rec.position().map_or(0, |p| p.byte() as usize),
                message: "expected 4 index fields".into(),
            });
        }
        rows.push((rec[0].to_string(), rec[1].to_string(), Split::parse(&rec[2])?, rec[3].to_string()));
    }
    let mut splits = SplitAssignment::default();
    let mut seen = BTreeMap::new();
    for (_, class, split, _) in &rows {
        if seen.insert(class.clone(), *split).is_none() {
            splits.push(*split, class.clone());
        }
    }
    splits.sort();
    let classes: Vec<String> = seen.keys().cloned().collect();
    let id_of: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let samples: Vec<(Split, Sample)> = rows
        .par_iter()
        .map(|(path, class, split, hash)| {
            let file = cache.join("features").join(format!("{hash}.ckpt"));
            let entries = checkpoint::read(&file)?;
            let get = |n: &str| {
                entries
                    .iter()
                    .find(|(k, _)| k == n)
                    .map(|(_, t)| t.clone())
                    .ok_or_else(|| Error::Data(format!("{}: missing {n}", file.display())))
            };
            let mut s = Sample::new(get("features")?.to_dtype(DType::F32), id_of[class.as_str()], path.clone());
            if keep_waveforms {
                let w = get("waveform")?;
                let samples: Vec<f32> = w.data().iter().map(|&v| v as f32).collect();
                s.waveform = Some(Arc::new(Waveform::new(samples, rate)?));
            }
            Ok((*split, s))
        })
        .collect::<Result<_>>()?;
    let mut pools: BTreeMap<Split, SamplePool> = Split::ALL.into_iter().map(|s| (s, SamplePool::new())).collect();
    for (split, s) in samples {
        pools.get_mut(&split).expect("all splits present").push(s)?;
    }
    Ok(LoadedData { classes, splits, pools })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Vec<ManifestRow> {
        (0..n)
            .flat_map(|c| {
                (0..2).map(move |i| ManifestRow {
                    path: PathBuf::from(format!("c{c}/{i}.wav")),
                    class: format!("class{c:02}"),
                    split: None,
                })
            })
            .collect()
    }

    #[test]
    fn preset_split_counts() {
        let a = assign_splits(&rows(50), Preset::Environmental, 0).unwrap();
        assert_eq!(a.counts(), [35, 5, 10]);
        assert_eq!(assign_splits(&rows(40), Preset::Speech, 0).unwrap().counts(), [25, 7, 8]);
        assert_eq!(assign_splits(&rows(8), Preset::Music, 0).unwrap().counts(), [4, 0, 4]);
        assert_eq!(a, assign_splits(&rows(50), Preset::Environmental, 0).unwrap());
        assert!(assign_splits(&rows(49), Preset::Environmental, 0).is_err());
        let all: BTreeSet<_> = a.train.iter().chain(&a.val).chain(&a.test).collect();
        assert_eq!(all.len(), 50);
    }

    #[test]
    fn manifest_parsing() {
        let text = "filepath,class-name,split\na.wav,dog,train\n/abs/b.wav,cat,test\n";
        let r = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(r[0].path, PathBuf::from("/data/a.wav"));
        assert_eq!(r[1].path, PathBuf::from("/abs/b.wav"));
        assert_eq!(r[1].split, Some(Split::Test));
        let a = assign_splits(&r, Preset::Music, 0).unwrap();
        assert_eq!((a.train.clone(), a.test.clone()), (vec!["dog".to_string()], vec!["cat".to_string()]));
        assert!(parse_manifest("path,class\n", Path::new(".")).is_err());
        assert!(parse_manifest("filepath,class-name,split\na.wav,dog,holdout\n", Path::new(".")).is_err());
    }
}
