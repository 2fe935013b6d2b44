use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use uplif::bmat::{Backend, Bmat, BmatConfig, DeleteOutcome, InsertOutcome, SplitParams};
use uplif::model::{ModelConfig, ModelTrainer, SplineTrainer};
use uplif::nullifier::{expand_segment, DensityModel};

const BACKENDS: [Backend; 2] = [Backend::RedBlack, Backend::BPlus];

fn build(keys: &[u64], d_max: u64, backend: Backend) -> Bmat {
    build_with(keys, d_max, backend, 32)
}

fn build_with(keys: &[u64], d_max: u64, backend: Backend, branching: usize) -> Bmat {
    let pairs: Vec<(u64, u64)> = keys.iter().map(|&k| (k, !k)).collect();
    let model = SplineTrainer.train(keys, &ModelConfig::default()).unwrap();
    let data = expand_segment(&pairs, &DensityModel::uniform(), d_max, (0, u64::MAX));
    let cfg = BmatConfig {
        backend,
        branching,
        ..BmatConfig::default()
    };
    Bmat::new(cfg, model, data).unwrap()
}

fn tight(density: &DensityModel) -> SplitParams<'_> {
    SplitParams {
        aux_distance: 4,
        d_max: 0,
        shift_window: 0,
        density,
    }
}

/// Buffered keys in the owning segment's range strictly below `k`.
fn brute_bias(t: &Bmat, k: u64) -> i64 {
    let seg = t.segment(t.lookup_adjustment(k).segment);
    let lo = seg.data().key_range().0;
    t.buffered().iter().filter(|&&(b, _)| b >= lo && b < k).count() as i64
}

fn check_against(t: &Bmat, oracle: &BTreeMap<u64, u64>) {
    for (&k, &v) in oracle {
        assert_eq!(t.get(k), Some(v), "key {k}");
    }
}

#[test]
fn bias_matches_linear_scan_after_random_buffering() {
    let density = DensityModel::uniform();
    for backend in BACKENDS {
        let keys: Vec<u64> = (0..2000).map(|i| i * 1000).collect();
        let mut t = build(&keys, 0, backend);
        let mut rng = StdRng::seed_from_u64(7);
        let mut buffered = 0;
        while buffered < 1000 {
            let k = rng.gen_range(0..2_000_000u64);
            if t.insert_update(k, k, &tight(&density)) == InsertOutcome::SegmentSplit {
                buffered += 1;
            }
        }
        assert_eq!(t.buffered().len(), 1000);
        for _ in 0..100 {
            let k = rng.gen_range(0..2_100_000u64);
            let a = t.lookup_adjustment(k);
            assert_eq!(a.bias, brute_bias(&t, k), "probe {k}");
            let want_hit = t.buffered().iter().find(|b| b.0 == k).map(|b| b.1);
            assert_eq!(a.hit, want_hit);
        }
        t.validate().unwrap();
    }
}

#[test]
fn two_buffered_updates_below_probe() {
    let density = DensityModel::uniform();
    let mut t = build(&[1, 2, 4, 5, 6, 8, 9, 11], 0, Backend::RedBlack);
    let p = SplitParams {
        aux_distance: 64,
        ..tight(&density)
    };
    assert_eq!(t.insert_update(3, 3, &p), InsertOutcome::SegmentSplit);
    assert_eq!(t.insert_update(7, 7, &p), InsertOutcome::SegmentSplit);
    // Both buffered keys are below 10, but only 7 starts the segment owning 10.
    assert_eq!(t.buffered().len(), 2);
    assert_eq!(t.lookup_adjustment(10).bias, brute_bias(&t, 10));
    assert_eq!(t.lookup_adjustment(10).bias, 1);
    t.validate().unwrap();
}

#[test]
fn sequential_inserts_into_a_full_segment() {
    let density = DensityModel::uniform();
    for backend in BACKENDS {
        let keys: Vec<u64> = (0..10_000).map(|i| i * 2).collect();
        let mut t = build(&keys, 0, backend);
        let mut oracle: BTreeMap<u64, u64> = keys.iter().map(|&k| (k, !k)).collect();
        let p = SplitParams {
            aux_distance: 64,
            d_max: 64,
            shift_window: 8,
            density: &density,
        };
        for (i, k) in (0..10_000u64).map(|i| i * 2 + 1).enumerate() {
            t.insert_update(k, k, &p);
            oracle.insert(k, k);
            if i % 1000 == 999 {
                t.validate().unwrap();
            }
        }
        check_against(&t, &oracle);
        assert_eq!(t.range(0, u64::MAX), oracle.iter().map(|(&k, &v)| (k, v)).collect::<Vec<_>>());
        let n = t.node_count() as f64;
        if backend == Backend::RedBlack {
            assert!(t.height() as f64 <= 2.0 * (n + 1.0).log2());
        }
        eprintln!("{backend}: {} splits, height {}, {} nodes", t.split_count(), t.height(), t.node_count());
    }
}

#[test]
fn interleaved_inserts_and_deletes_keep_bias_exact() {
    let density = DensityModel::uniform();
    for backend in BACKENDS {
        let keys: Vec<u64> = (0..1000).map(|i| i * 50).collect();
        let mut t = build(&keys, 0, backend);
        let mut oracle: BTreeMap<u64, u64> = keys.iter().map(|&k| (k, !k)).collect();
        let mut rng = StdRng::seed_from_u64(99);
        for i in 0..5000 {
            let k = rng.gen_range(0..60_000u64);
            if rng.gen_bool(0.6) {
                t.insert_update(k, i, &tight(&density));
                oracle.insert(k, i);
            } else {
                let out = t.delete_update(k);
                assert_eq!(out == DeleteOutcome::NotFound, oracle.remove(&k).is_none());
            }
            if i % 1000 == 999 {
                t.validate().unwrap();
            }
        }
        for _ in 0..100 {
            let k = rng.gen_range(0..60_000u64);
            assert_eq!(t.lookup_adjustment(k).bias, brute_bias(&t, k));
            assert_eq!(t.get(k), oracle.get(&k).copied());
        }
        check_against(&t, &oracle);
    }
}

#[test]
fn conversion_preserves_adjustments() {
    let density = DensityModel::uniform();
    let keys: Vec<u64> = (0..20_000).map(|i| i * 10).collect();
    let mut t = build(&keys, 0, Backend::RedBlack);
    let mut rng = StdRng::seed_from_u64(3);
    while t.node_count() < 10_000 {
        let k = rng.gen_range(0..200_000u64);
        t.insert_update(k, k, &tight(&density));
    }
    let probes: Vec<u64> = (0..1000).map(|_| rng.gen_range(0..210_000)).collect();
    let answer = |t: &Bmat, k: u64| {
        let a = t.lookup_adjustment(k);
        (a.bias, a.hit, a.segment, t.get(k))
    };
    let before: Vec<_> = probes.iter().map(|&k| answer(&t, k)).collect();
    t.convert(Backend::BPlus).unwrap();
    t.validate().unwrap();
    assert_eq!(t.backend(), Backend::BPlus);
    let after: Vec<_> = probes.iter().map(|&k| answer(&t, k)).collect();
    assert_eq!(before, after);
    t.convert(Backend::RedBlack).unwrap();
    let back: Vec<_> = probes.iter().map(|&k| answer(&t, k)).collect();
    assert_eq!(before, back);
}

#[test]
fn empty_conversion() {
    let mut t = build(&[1], 0, Backend::RedBlack);
    t.convert(Backend::BPlus).unwrap();
    assert_eq!((t.node_count(), t.height()), (0, 0));
    t.validate().unwrap();
}

#[test]
fn prune_shrinks_deep_trees_and_keeps_every_key() {
    let density = DensityModel::uniform();
    for backend in BACKENDS {
        let keys: Vec<u64> = (0..500).map(|i| i * 4).collect();
        // Small fan-out so the B+ backend reaches the target height quickly.
        let mut t = build_with(&keys, 0, backend, 4);
        let mut oracle: BTreeMap<u64, u64> = keys.iter().map(|&k| (k, !k)).collect();
        let p = SplitParams {
            aux_distance: 1,
            ..tight(&density)
        };
        // Ascending keys past the loaded domain: every insert splits.
        let mut k = 10_000u64;
        while t.height() < 12 {
            t.insert_update(k, k, &p);
            oracle.insert(k, k);
            k += 3;
        }
        for _ in 0..3 {
            let before = t.height();
            let report = t
                .prune_retrain(&SplineTrainer, &ModelConfig::default(), &density, 16)
                .unwrap();
            assert!(t.height() < before);
            assert_eq!(report.height_after, t.height());
            assert!(report.error_sum_after <= report.error_sum_before, "{report:?}");
            t.validate().unwrap();
            check_against(&t, &oracle);
            assert_eq!(t.range(0, u64::MAX).len(), oracle.len());
        }
    }
}

#[test]
fn stats_match_a_full_walk() {
    let density = DensityModel::uniform();
    let keys: Vec<u64> = (0..3000).map(|i| i * 7).collect();
    let mut t = build(&keys, 2, Backend::BPlus);
    let mut order: Vec<u64> = (0..21_000).collect();
    order.shuffle(&mut StdRng::seed_from_u64(11));
    for &k in &order[..4000] {
        t.insert_update(k, k, &tight(&density));
    }
    let s = t.stats();
    let segs = t.segments_in_order();
    let min_live = segs.iter().map(|&(_, id)| t.segment(id).data().live_count()).min().unwrap();
    let max_alpha = segs
        .iter()
        .map(|&(_, id)| {
            let d = t.segment(id).data();
            if d.live_count() == 0 {
                0.0
            } else {
                d.null_count() as f64 / d.live_count() as f64
            }
        })
        .fold(0.0f64, f64::max);
    assert_eq!(s.granularity, min_live);
    assert_eq!(s.error_scaling, max_alpha);
    assert_eq!(s.model_count, segs.len());
    assert_eq!(s.node_count, t.node_count());
    assert_eq!(s.height, t.height());
}
