//! Episodes, the episode sampler and the three pseudo-episode division
//! schemes that turn a labeled support set into fine-tuning tasks.
//!
//! A support set is a grid indexed `[class][shot]`. A *column* is one shot
//! of every class. All division schemes operate column-wise and never
//! reorder columns, so their output depends only on the grid (and, for
//! augmented replication, the rng).

mod division;
mod sampler;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use division::{adft_split, divide, idft_split, rdft_split, Augmenter};
pub use sampler::{sample_episode, SamplePool};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One labeled clip.
#[derive(Clone, Debug)]
pub struct Sample {
    /// `bins × frames` feature matrix.
    pub features: Tensor,
    pub class_id: usize,
    /// File path or synthesis seed; unique within a pool.
    pub source_id: String,
    /// Source audio, kept when waveform augmentation may need it.
    pub waveform: Option<Arc<Waveform>>,
}

impl Sample {
    pub fn new(features: Tensor, class_id: usize, source_id: impl Into<String>) -> Self {
        Self {
            features,
            class_id,
            source_id: source_id.into(),
            waveform: None,
        }
    }
}

/// Support grid `[class][shot]`; every row has the same length.
#[derive(Clone, Debug)]
pub struct SupportGrid {
    rows: Vec<Vec<Sample>>,
}

impl SupportGrid {
    pub fn new(rows: Vec<Vec<Sample>>) -> Result<Self> {
        let shot = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || shot == 0 || rows.iter().any(|r| r.len() != shot) {
            return Err(Error::Data("support grid must be full and non-empty".into()));
        }
        Ok(Self { rows })
    }

    pub fn way(&self) -> usize {
        self.rows.len()
    }

    pub fn shot(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, class: usize, shot: usize) -> &Sample {
        &self.rows[class][shot]
    }

    pub fn rows(&self) -> &[Vec<Sample>] {
        &self.rows
    }

    /// Shot `j` of every class.
    pub fn column(&self, j: usize) -> Vec<Sample> {
        self.rows.iter().map(|r| r[j].clone()).collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn columns(&self, cols: &[usize]) -> Vec<Vec<Sample>> {
        self.rows
            .iter()
            .map(|r| cols.iter().map(|&j| r[j].clone()).collect())
            .collect()
    }

    /// Samples in class-major order.
    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.rows.iter().flatten()
    }
}

/// A K-way N-shot task.
#[derive(Clone, Debug)]
pub struct Episode {
    pub support: SupportGrid,
    pub query: Vec<Sample>,
    /// Position of each query's class among the support rows.
    pub query_labels: Vec<usize>,
}

impl Episode {
    pub fn new(support: SupportGrid, query: Vec<Sample>) -> Result<Self> {
        let classes: Vec<usize> = support.rows().iter().map(|r| r[0].class_id).collect();
        for r in support.rows() {
            if r.iter().any(|s| s.class_id != r[0].class_id) {
                return Err(Error::Data("support row mixes classes".into()));
            }
        }
        let query_labels = query
            .iter()
            .map(|q| {
                classes
                    .iter()
                    .position(|&c| c == q.class_id)
                    .ok_or_else(|| Error::Data(format!("query class {} not in episode", q.class_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            support,
            query,
            query_labels,
        })
    }

    pub fn way(&self) -> usize {
        self.support.way()
    }

    pub fn shot(&self) -> usize {
        self.support.shot()
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.support.rows().iter().map(|r| r[0].class_id).collect()
    }

    pub fn task(&self) -> Result<Task> {
        Task::build(&self.support, &self.query, &self.query_labels)
    }

    /// Line-oriented `episode-id, role, class-id, shot-index, source-id`
    /// records.
    pub fn write_manifest<W: Write>(&self, episode_id: &str, out: &mut W) -> std::io::Result<()> {
        for row in self.support.rows() {
            for (j, s) in row.iter().enumerate() {
                writeln!(out, "{episode_id},support,{},{j},{}", s.class_id, s.source_id)?;
            }
        }
        let mut seen = vec![0usize; self.way()];
        for (q, &l) in self.query.iter().zip(&self.query_labels) {
            writeln!(out, "{episode_id},query,{},{},{}", q.class_id, seen[l], q.source_id)?;
            seen[l] += 1;
        }
        Ok(())
    }
}

/// Which division scheme produced a pseudo-episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// No fine-tuning.
    None,
    Rdft,
    Idft,
    Adft,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "rdft" => Ok(Self::Rdft),
            "idft" => Ok(Self::Idft),
            "adft" => Ok(Self::Adft),
            _ => Err(Error::Config(format!("unknown division scheme {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Rdft => "rdft",
            Self::Idft => "idft",
            Self::Adft => "adft",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A (pseudo support, pseudo query) pair cut from one support grid.
#[derive(Clone, Debug)]
pub struct PseudoEpisode {
    pub support: SupportGrid,
    /// One sample per class, in class order.
    pub query: Vec<Sample>,
    /// Support column indices (of the parent grid) used for the query.
    pub query_column: usize,
    /// Parent columns making up the pseudo support, in order; the
    /// replicated column appears twice for ADFT.
    pub support_columns: Vec<usize>,
    pub origin: Scheme,
    pub index: usize,
    /// Replicated samples whose augmentation failed and were copied raw.
    pub augment_fallbacks: usize,
}

impl PseudoEpisode {
    pub fn task(&self) -> Result<Task> {
        let labels: Vec<usize> = (0..self.query.len()).collect();
        Task::build(&self.support, &self.query, &labels)
    }
}

/// Stacked tensors for one forward pass.
#[derive(Clone, Debug)]
pub struct Task {
    /// `(way·shot, bins, frames)`, class-major.
    pub support: Tensor,
    pub way: usize,
    pub shot: usize,
    /// `(queries, bins, frames)`.
    pub query: Tensor,
    /// Episode-local label of each query.
    pub query_labels: Vec<usize>,
    /// Global class id of each query.
    pub query_classes: Vec<usize>,
}

impl Task {
    fn build(support: &SupportGrid, query: &[Sample], labels: &[usize]) -> Result<Self> {
        if query.is_empty() {
            return Err(Error::Data("task has no queries".into()));
        }
        let s: Vec<Tensor> = support.iter().map(|s| s.features.clone()).collect();
        let q: Vec<Tensor> = query.iter().map(|s| s.features.clone()).collect();
        let support_t = Tensor::stack(&s)?;
        let query_t = Tensor::stack(&q)?;
        if support_t.shape()[1..] != query_t.shape()[1..] {
            return Err(Error::shape("task", support_t.shape(), query_t.shape()));
        }
        Ok(Self {
            support: support_t,
            way: support.way(),
            shot: support.shot(),
            query: query_t,
            query_labels: labels.to_vec(),
            query_classes: query.iter().map(|s| s.class_id).collect(),
        })
    }

    pub fn n_query(&self) -> usize {
        self.query_labels.len()
    }
}
