use std::collections::BTreeMap;

use epift_core::episodes::{
    adft_split, idft_split, rdft_split, sample_episode, Augmenter, Sample, SamplePool, SupportGrid,
};
use epift_core::{DType, Error, Result, Tensor};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(k: usize, n: usize) -> SupportGrid {
    let rows = (0..k)
        .map(|c| {
            (0..n)
                .map(|j| Sample::new(Tensor::full(&[2, 2], (c * 10 + j) as f64, DType::F32), c, format!("c{c}s{j}")))
                .collect()
        })
        .collect();
    SupportGrid::new(rows).unwrap()
}

fn parent_ids(g: &SupportGrid) -> Vec<String> {
    let mut v: Vec<String> = g.iter().map(|s| s.source_id.clone()).collect();
    v.sort();
    v
}

fn col_of(id: &str) -> usize {
    id.split('s').nth(1).unwrap().parse().unwrap()
}

#[test]
fn rdft_exhaustive() {
    for k in 1..=5 {
        for n in 2..=6 {
            let g = grid(k, n);
            let eps = rdft_split(&g).unwrap();
            assert_eq!(eps.len(), n);
            let mut queried: Vec<usize> = eps.iter().map(|e| e.query_column).collect();
            queried.sort();
            assert_eq!(queried, (0..n).collect::<Vec<_>>());
            for e in &eps {
                assert_eq!((e.support.way(), e.support.shot()), (k, n - 1));
                assert_eq!(e.query.len(), k);
                for (c, q) in e.query.iter().enumerate() {
                    assert_eq!(q.class_id, c);
                }
                let mut ids: Vec<String> =
                    e.support.iter().chain(&e.query).map(|s| s.source_id.clone()).collect();
                ids.sort();
                assert_eq!(ids, parent_ids(&g), "K={k} N={n}");
            }
        }
    }
}

#[test]
fn rdft_five_by_five() {
    let eps = rdft_split(&grid(5, 5)).unwrap();
    assert_eq!(eps.len(), 5);
    assert!(eps.iter().all(|e| e.support.shot() == 4 && e.query.len() == 5));
}

#[test]
fn idft_exhaustive_novelty() {
    for k in 1..=5 {
        for n in 2..=6 {
            let g = grid(k, n);
            let eps = idft_split(&g).unwrap();
            assert_eq!(eps.len(), n - 1);
            let mut seen = std::collections::HashSet::new();
            for (i, e) in eps.iter().enumerate() {
                let t = i + 1;
                assert_eq!(e.support.shot(), t);
                assert_eq!(e.query_column, t);
                let max_support = e.support.iter().map(|s| col_of(&s.source_id)).max().unwrap();
                assert!(e.query_column > max_support);
                for q in &e.query {
                    assert!(!seen.contains(&q.source_id), "query {} seen before", q.source_id);
                }
                seen.extend(e.support.iter().map(|s| s.source_id.clone()));
            }
        }
    }
}

#[test]
fn idft_minimal() {
    let eps = idft_split(&grid(2, 2)).unwrap();
    assert_eq!(eps.len(), 1);
    assert_eq!(eps[0].support_columns, vec![0]);
    assert_eq!(eps[0].query_column, 1);
}

#[test]
fn adft_exhaustive_uniform_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in 1..=5 {
        for n in 2..=6 {
            let g = grid(k, n);
            let eps = adft_split(&g, None, &mut rng).unwrap();
            assert_eq!(eps.len(), n);
            let mut replicated = vec![0usize; n];
            let mut weight = vec![0usize; n];
            for (j, e) in eps.iter().enumerate() {
                assert_eq!((e.support.way(), e.support.shot()), (k, n));
                assert_eq!(e.query_column, j);
                let extra = *e.support_columns.last().unwrap();
                assert_eq!(extra, (j + n - 1) % n);
                replicated[extra] += 1;
                // Multiset: parent minus the query column plus one duplicate.
                let mut got: BTreeMap<String, usize> = BTreeMap::new();
                for s in e.support.iter() {
                    *got.entry(s.source_id.clone()).or_default() += 1;
                    weight[col_of(&s.source_id)] += 1;
                }
                let mut want: BTreeMap<String, usize> = BTreeMap::new();
                for s in g.iter().filter(|s| col_of(&s.source_id) != j) {
                    *want.entry(s.source_id.clone()).or_default() += 1;
                }
                for c in 0..k {
                    *want.entry(format!("c{c}s{extra}")).or_default() += 1;
                }
                assert_eq!(got, want);
            }
            assert!(replicated.iter().all(|&r| r == 1));
            // Every column is in N−1 supports as itself plus one replication.
            assert!(weight.iter().all(|&w| w == k * n), "K={k} N={n}: {weight:?}");
        }
    }
}

#[test]
fn adft_wraps_and_copies_bitwise() {
    let g = grid(5, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eps = adft_split(&g, None, &mut rng).unwrap();
    assert_eq!(eps[0].support_columns, vec![1, 2, 3, 4, 4]);
    for k in 0..5 {
        let copy = eps[0].support.get(k, 4);
        let src = g.get(k, 4);
        assert_eq!(copy.source_id, src.source_id);
        assert_eq!(copy.features.data(), src.features.data());
    }
}

struct Failing;

impl Augmenter for Failing {
    fn augment(&self, _: &Sample, _: &mut dyn RngCore) -> Result<Sample> {
        Err(Error::Data("boom".into()))
    }
}

#[test]
fn adft_augmenter_failure_falls_back() {
    let g = grid(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = adft_split(&g, Some(&Failing), &mut rng).unwrap();
    assert!(eps.iter().all(|e| e.augment_fallbacks == 3));
    assert_eq!(eps[1].support.get(2, 2).source_id, "c2s0");
}

#[test]
fn one_shot_is_rejected() {
    let g = grid(3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(rdft_split(&g), Err(Error::UnsupportedShotCount { shots: 1 })));
    assert!(matches!(idft_split(&g), Err(Error::UnsupportedShotCount { .. })));
    assert!(matches!(adft_split(&g, None, &mut rng), Err(Error::UnsupportedShotCount { .. })));
}

fn pool(classes: usize, per_class: usize) -> SamplePool {
    SamplePool::from_samples((0..classes).flat_map(|c| {
        (0..per_class).map(move |i| Sample::new(Tensor::full(&[1, 1], i as f64, DType::F32), c, format!("p{c}-{i}")))
    }))
    .unwrap()
}

#[test]
fn class_frequency_is_binomial() {
    let p = pool(10, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 10_000;
    let mut counts = [0usize; 10];
    for _ in 0..draws {
        let ep = sample_episode(&p, 5, 1, 1, &mut rng).unwrap();
        for c in ep.class_ids() {
            counts[c] += 1;
        }
    }
    let sigma = (draws as f64 * 0.5 * 0.5).sqrt();
    for (c, &n) in counts.iter().enumerate() {
        assert!((n as f64 - draws as f64 * 0.5).abs() <= 3.0 * sigma, "class {c}: {n}");
    }
}

#[test]
fn exact_pool_is_partitioned() {
    let p = pool(3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ep = sample_episode(&p, 3, 2, 2, &mut rng).unwrap();
    let mut ids: Vec<String> = ep.support.iter().chain(&ep.query).map(|s| s.source_id.clone()).collect();
    ids.sort();
    let mut all: Vec<String> = p.iter().map(|s| s.source_id.clone()).collect();
    all.sort();
    assert_eq!(ids, all);
}

#[test]
fn sampling_is_deterministic() {
    let p = pool(8, 10);
    let a = sample_episode(&p, 5, 3, 2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let b = sample_episode(&p, 5, 3, 2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let ids = |e: &epift_core::episodes::Episode| -> Vec<String> {
        e.support.iter().chain(&e.query).map(|s| s.source_id.clone()).collect()
    };
    assert_eq!(ids(&a), ids(&b));
}

#[test]
fn capacity_error_names_deficit() {
    let p = pool(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    match sample_episode(&p, 5, 1, 1, &mut rng) {
        Err(Error::Capacity(m)) => assert!(m.contains("short by 1"), "{m}"),
        other => panic!("{other:?}"),
    }
    match sample_episode(&p, 3, 2, 2, &mut rng) {
        Err(Error::Capacity(m)) => assert!(m.contains("short by 1"), "{m}"),
        other => panic!("{other:?}"),
    }
}
