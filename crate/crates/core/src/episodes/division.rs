use rand::RngCore;

use super::{PseudoEpisode, Sample, Scheme, SupportGrid};
use crate::error::{Error, Result};

/// Transform applied to the replicated shot in augmented division.
pub trait Augmenter: Send + Sync {
    fn augment(&self, sample: &Sample, rng: &mut dyn RngCore) -> Result<Sample>;
}

fn need_multi_shot(support: &SupportGrid) -> Result<()> {
    if support.shot() < 2 {
        return Err(Error::UnsupportedShotCount {
            shots: support.shot(),
        });
    }
    Ok(())
}

fn pseudo(
    support: &SupportGrid,
    cols: Vec<usize>,
    rows: Vec<Vec<Sample>>,
    query_column: usize,
    origin: Scheme,
    index: usize,
    augment_fallbacks: usize,
) -> Result<PseudoEpisode> {
    Ok(PseudoEpisode {
        support: SupportGrid::new(rows)?,
        query: support.column(query_column),
        query_column,
        support_columns: cols,
        origin,
        index,
        augment_fallbacks,
    })
}

/// Rotational division: episode `j` queries column `j` against the other
/// `N−1` columns.
pub fn rdft_split(support: &SupportGrid) -> Result<Vec<PseudoEpisode>> {
    need_multi_shot(support)?;
    let n = support.shot();
    (0..n)
        .map(|j| {
            let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
            let rows = support.columns(&cols);
            pseudo(support, cols, rows, j, Scheme::Rdft, j, 0)
        })
        .collect()
}

/// Iterative division: iteration `t` (1-based) supports on columns
/// `0..t` and queries column `t`, so every query is new to the model.
pub fn idft_split(support: &SupportGrid) -> Result<Vec<PseudoEpisode>> {
    need_multi_shot(support)?;
    let n = support.shot();
    (1..n)
        .map(|t| {
            let cols: Vec<usize> = (0..t).collect();
            let rows = support.columns(&cols);
            pseudo(support, cols, rows, t, Scheme::Idft, t - 1, 0)
        })
        .collect()
}

/// Augmented division: rotational division with column `(j−1) mod N`
/// replicated (and optionally augmented) onto the end of the pseudo
/// support, restoring `N` shots. Across the `N` episodes every column is
/// replicated exactly once.
pub fn adft_split(
    support: &SupportGrid,
    augmenter: Option<&dyn Augmenter>,
    rng: &mut dyn RngCore,
) -> Result<Vec<PseudoEpisode>> {
    need_multi_shot(support)?;
    let n = support.shot();
    (0..n)
        .map(|j| {
            let extra = (j + n - 1) % n;
            let mut cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
            let mut rows = support.columns(&cols);
            let mut fallbacks = 0;
            for (k, row) in rows.iter_mut().enumerate() {
                let src = support.get(k, extra);
                let copy = match augmenter {
                    None => src.clone(),
                    Some(a) => match a.augment(src, rng) {
                        Ok(s) => s,
                        Err(e) => {
                            log::warn!("augmentation of {} failed, replicating raw: {e}", src.source_id);
                            fallbacks += 1;
                            src.clone()
                        }
                    },
                };
                row.push(copy);
            }
            cols.push(extra);
            pseudo(support, cols, rows, j, Scheme::Adft, j, fallbacks)
        })
        .collect()
}

/// Dispatches on `scheme`; `Scheme::None` yields no pseudo-episodes.
pub fn divide(
    scheme: Scheme,
    support: &SupportGrid,
    augmenter: Option<&dyn Augmenter>,
    rng: &mut dyn RngCore,
) -> Result<Vec<PseudoEpisode>> {
    match scheme {
        Scheme::None => Ok(Vec::new()),
        Scheme::Rdft => rdft_split(support),
        Scheme::Idft => idft_split(support),
        Scheme::Adft => adft_split(support, augmenter, rng),
    }
}
