use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::Rng;

use super::{Episode, Sample, SupportGrid};
use crate::error::{Error, Result};

/// Labeled samples grouped by class id. Class and sample order are stable
/// (ascending class id, insertion order within a class), so sampling with
/// a seeded rng is reproducible.
#[derive(Clone, Debug, Default)]
pub struct SamplePool {
    classes: BTreeMap<usize, Vec<Sample>>,
}

impl SamplePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: impl IntoIterator<Item = Sample>) -> Result<Self> {
        let mut p = Self::new();
        for s in samples {
            p.push(s)?;
        }
        Ok(p)
    }

    pub fn push(&mut self, s: Sample) -> Result<()> {
        if !s.features.all_finite() {
            return Err(Error::Data(format!("sample {} has non-finite features", s.source_id)));
        }
        self.classes.entry(s.class_id).or_default().push(s);
        Ok(())
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.classes.keys().copied().collect()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, id: usize) -> &[Sample] {
        self.classes.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.classes.values().flatten()
    }

    /// Keeps only the listed classes.
    pub fn restrict(&self, ids: &[usize]) -> Self {
        Self {
            classes: self
                .classes
                .iter()
                .filter(|(k, _)| ids.contains(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }
}

/// Draws `way` classes uniformly without replacement and, per class,
/// `shot + queries` samples without replacement; the first `shot` go to
/// the support grid in draw order.
pub fn sample_episode<R: Rng + ?Sized>(
    pool: &SamplePool,
    way: usize,
    shot: usize,
    queries: usize,
    rng: &mut R,
) -> Result<Episode> {
    if way == 0 || shot == 0 || queries == 0 {
        return Err(Error::Config(format!(
            "episode needs way, shot and queries ≥ 1 (got {way}, {shot}, {queries})"
        )));
    }
    if pool.n_classes() < way {
        return Err(Error::Capacity(format!(
            "need {way} classes, pool has {} (short by {})",
            pool.n_classes(),
            way - pool.n_classes()
        )));
    }
    let per_class = shot + queries;
    let short: Vec<String> = pool
        .classes
        .iter()
        .filter(|(_, v)| v.len() < per_class)
        .map(|(k, v)| format!("class {k} short by {}", per_class - v.len()))
        .collect();
    let eligible: Vec<usize> = pool
        .classes
        .iter()
        .filter(|(_, v)| v.len() >= per_class)
        .map(|(k, _)| *k)
        .collect();
    if eligible.len() < way {
        return Err(Error::Capacity(format!(
            "need {way} classes with {per_class} samples each, {} qualify ({})",
            eligible.len(),
            short.join(", ")
        )));
    }

    let chosen = index::sample(rng, eligible.len(), way).into_vec();
    let mut rows = Vec::with_capacity(way);
    let mut query = Vec::with_capacity(way * queries);
    for &ci in &chosen {
        let samples = &pool.classes[&eligible[ci]];
        let picks = index::sample(rng, samples.len(), per_class).into_vec();
        rows.push(picks[..shot].iter().map(|&i| samples[i].clone()).collect());
        query.extend(picks[shot..].iter().map(|&i| samples[i].clone()));
    }
    let ep = Episode::new(SupportGrid::new(rows)?, query)?;
    check_disjoint(&ep)?;
    Ok(ep)
}

fn check_disjoint(ep: &Episode) -> Result<()> {
    let mut seen = HashSet::new();
    for s in ep.support.iter().chain(&ep.query) {
        if !seen.insert(s.source_id.as_str()) {
            return Err(Error::Data(format!("source {} appears twice in an episode", s.source_id)));
        }
    }
    Ok(())
}
