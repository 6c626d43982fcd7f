//! Batch evaluation over test episodes and aggregation into
//! before/after/gain summaries with 95% confidence intervals.

use std::fmt::Write as _;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodes::{Episode, Scheme};
use crate::error::{Error, Result};
use crate::metaopt::MetaLearner;

/// Default number of test episodes.
pub const DEFAULT_EPISODES: usize = 1000;

/// z-value of a two-sided 95% interval.
pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode_id: usize,
    pub seed: u64,
    pub acc_before: f64,
    pub acc_after: f64,
    pub scheme: Scheme,
}

/// Mean and 95% CI half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci: f64,
}

impl Stat {
    /// `ci = 1.96·s/√E` with `s` the sample standard deviation; zero for
    /// fewer than two values. Values are sorted before summation so the
    /// result does not depend on their order.
    pub fn of(values: &[f64]) -> Stat {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Stat { mean: f64::NAN, ci: f64::NAN };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Stat { mean, ci: 0.0 };
        }
        let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        dev.sort_by(f64::total_cmp);
        let sd = (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt();
        Stat {
            mean,
            ci: Z95 * sd / (n as f64).sqrt(),
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci
    }

    /// Whether `[mean ± ci]` intersects the other interval.
    pub fn overlaps(&self, other: &Stat) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub scheme: Scheme,
    pub before: Stat,
    pub after: Stat,
    /// Per-episode paired difference `after − before`.
    pub diff: Stat,
}

impl Summary {
    /// Pure function of the records.
    pub fn from_records(records: &[EvalRecord]) -> Result<Summary> {
        if records.is_empty() {
            return Err(Error::Usage("no evaluation records to summarize".into()));
        }
        let before: Vec<f64> = records.iter().map(|r| r.acc_before).collect();
        let after: Vec<f64> = records.iter().map(|r| r.acc_after).collect();
        let diff: Vec<f64> = records.iter().map(|r| r.acc_after - r.acc_before).collect();
        Ok(Summary {
            episodes: records.len(),
            scheme: records[0].scheme,
            before: Stat::of(&before),
            after: Stat::of(&after),
            diff: Stat::of(&diff),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub baseline: Stat,
    pub variant: Stat,
    pub gain: f64,
    pub ci_overlap: bool,
}

impl GainReport {
    /// Gain as a signed percentage with two decimals, e.g. `+3.63%`.
    pub fn gain_percent(&self) -> String {
        format_gain(self.gain)
    }
}

/// `+3.63%` style formatting of an accuracy difference. The value is
/// rounded to basis points first so decimal inputs like `0.8597 − 0.8234`
/// print as written rather than at the mercy of binary rounding.
pub fn format_gain(gain: f64) -> String {
    let bp = (gain * 1e4).round() as i64;
    let sign = if bp < 0 { '-' } else { '+' };
    let a = bp.unsigned_abs();
    format!("{sign}{}.{:02}%", a / 100, a % 100)
}

/// Gain of the variant's fine-tuned accuracy over the baseline accuracy
/// (the baseline's pre-fine-tuning column).
pub fn compare_runs(baseline: &Summary, variant: &Summary) -> GainReport {
    compare_stats(baseline.before, variant.after)
}

pub fn compare_stats(baseline: Stat, variant: Stat) -> GainReport {
    GainReport {
        baseline,
        variant,
        gain: variant.mean - baseline.mean,
        ci_overlap: baseline.overlaps(&variant),
    }
}

/// Per-episode seed from the run seed and episode index (SplitMix64
/// finalizer over a combined word), so two runs with the same run seed
/// see identical episodes.
pub fn episode_seed(run_seed: u64, index: usize) -> u64 {
    let mut z = run_seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Evaluates `episodes` test episodes in parallel. `make_episode` builds
/// episode `i` from an RNG seeded with `episode_seed(run_seed, i)`; the
/// same RNG then drives fine-tuning.
pub fn evaluate_suite<F>(
    learner: &MetaLearner,
    episodes: usize,
    run_seed: u64,
    make_episode: F,
) -> Result<(Vec<EvalRecord>, Summary)>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<Episode> + Sync,
{
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let records = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let seed = episode_seed(run_seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let episode = make_episode(i, &mut rng)?;
            let out = learner.episode_finetune_eval(&episode, &mut rng)?;
            Ok(EvalRecord {
                episode_id: i,
                seed,
                acc_before: out.acc_before,
                acc_after: out.acc_after,
                scheme: learner.cfg.scheme,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_records(&records)?;
    Ok((records, summary))
}

pub const RECORDS_HEADER: &str = "episode_id,seed,acc_before,acc_after";

pub fn write_records<W: Write>(records: &[EvalRecord], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{RECORDS_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{:?},{:?}", r.episode_id, r.seed, r.acc_before, r.acc_after)?;
    }
    Ok(())
}

/// Parses a records CSV written by [`write_records`].
pub fn read_records(text: &str, scheme: Scheme) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RECORDS_HEADER) {
        return Err(Error::Parse {
            offset: 0,
            message: "missing records header".into(),
        });
    }
    let mut offset = RECORDS_HEADER.len() + 1;
    let mut out = Vec::new();
    for line in lines {
        let bad = |m: &str| Error::Parse {
            offset,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        out.push(EvalRecord {
            episode_id: f[0].parse().map_err(|_| bad("bad episode id"))?,
            seed: f[1].parse().map_err(|_| bad("bad seed"))?,
            acc_before: f[2].parse().map_err(|_| bad("bad acc_before"))?,
            acc_after: f[3].parse().map_err(|_| bad("bad acc_after"))?,
            scheme,
        });
        offset += line.len() + 1;
    }
    Ok(out)
}

fn pct(s: &Stat) -> String {
    format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.ci)
}

/// Three-column `w/o FT | w/ FT | Gain` table, one row per labeled run.
/// Gain is relative to the row's own pre-fine-tuning accuracy unless a
/// baseline summary is given.
pub fn render_table(rows: &[(&str, &Summary)], baseline: Option<&Summary>) -> String {
    let name_w = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<name_w$} | {:>15} | {:>15} | {:>8}", "model", "w/o FT", "w/ FT", "Gain");
    let _ = writeln!(s, "{}", "-".repeat(name_w + 47));
    for (name, sum) in rows {
        let base = baseline.map_or(sum.before, |b| b.before);
        let after = if sum.scheme == Scheme::None { "-".to_string() } else { pct(&sum.after) };
        let gain = if sum.scheme == Scheme::None {
            "-".to_string()
        } else {
            format_gain(sum.after.mean - base.mean)
        };
        let _ = writeln!(s, "{:<name_w$} | {:>15} | {:>15} | {:>8}", name, pct(&sum.before), after, gain);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, b: f64, a: f64) -> EvalRecord {
        EvalRecord {
            episode_id: i,
            seed: i as u64,
            acc_before: b,
            acc_after: a,
            scheme: Scheme::Rdft,
        }
    }

    #[test]
    fn two_point_statistics() {
        let s = Stat::of(&[0.8, 1.0]);
        assert!((s.mean - 0.9).abs() < 1e-12);
        let sd = (0.02f64).sqrt();
        assert!((s.ci - 1.96 * sd / 2f64.sqrt()).abs() < 1e-12);
        assert!((s.ci - 0.196).abs() < 1e-9);
        assert_eq!(Stat::of(&[1.0; 7]), Stat { mean: 1.0, ci: 0.0 });
        assert_eq!(Stat::of(&[0.3]).ci, 0.0);
    }

    #[test]
    fn summary_is_order_independent() {
        let recs: Vec<_> = (0..50).map(|i| rec(i, (i * 37 % 11) as f64 / 11.0, (i * 13 % 7) as f64 / 7.0)).collect();
        let mut rev = recs.clone();
        rev.reverse();
        rev.swap(3, 17);
        assert_eq!(Summary::from_records(&recs).unwrap(), Summary::from_records(&rev).unwrap());
        assert!(matches!(Summary::from_records(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn gain_formatting_and_overlap() {
        let r = compare_stats(Stat { mean: 0.8234, ci: 0.0 }, Stat { mean: 0.8597, ci: 0.0 });
        assert_eq!(r.gain_percent(), "+3.63%");
        assert!(!r.ci_overlap);
        assert_eq!(format_gain(0.0), "+0.00%");
        assert_eq!(format_gain(-0.0123), "-1.23%");
        let a = Stat { mean: 0.5, ci: 0.1 };
        assert!(a.overlaps(&Stat { mean: 0.65, ci: 0.06 }));
        assert!(!a.overlaps(&Stat { mean: 0.65, ci: 0.04 }));
    }

    #[test]
    fn records_round_trip() {
        let recs = vec![rec(0, 0.84, 0.88), rec(1, 1.0, 0.96)];
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let back = read_records(std::str::from_utf8(&buf).unwrap(), Scheme::Rdft).unwrap();
        assert_eq!(back, recs);
        assert_eq!(Summary::from_records(&back).unwrap(), Summary::from_records(&recs).unwrap());
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| episode_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_eq!(episode_seed(7, 3), episode_seed(7, 3));
        assert_ne!(episode_seed(7, 3), episode_seed(8, 3));
    }
}
