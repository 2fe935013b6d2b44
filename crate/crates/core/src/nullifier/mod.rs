//! Placeholder allocation.
//!
//! The nullifier expands a sorted run of keys into a [`GappedSegment`] by
//! inserting NULL slots between consecutive keys in proportion to the
//! estimated density of future updates over each interval:
//!
//! `gap(k_i, k_j) = ceil(d_max * mass(k_i, k_j) / mass(k_1, k_N))`

mod density;
mod segment;

pub use density::{
    fit_update_distribution, fit_with_trace, DensityError, DensityModel, FitConfig, FitReport,
    GaussianComponent,
};
pub use segment::{
    Entry, GapInsert, GappedSegment, Probe, SegmentError, Slot, SLOT_BYTES, VALUE_BYTES,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NullifierError {
    #[error("empty interval")]
    EmptyInterval,
    #[error("interval outside domain")]
    OutsideDomain,
}

/// Placeholder count for the interval `(k_i, k_j)` relative to `domain`.
pub fn gap_size(
    density: &DensityModel,
    k_i: u64,
    k_j: u64,
    d_max: u64,
    domain: (u64, u64),
) -> Result<u64, NullifierError> {
    if k_i >= k_j {
        return Err(NullifierError::EmptyInterval);
    }
    if k_i < domain.0 || k_j > domain.1 {
        return Err(NullifierError::OutsideDomain);
    }
    let total = density.mass(domain.0, domain.1);
    Ok(gap_with_total(density, k_i, k_j, d_max, domain, total))
}

/// `gap_size` with the domain mass precomputed.
fn gap_with_total(
    density: &DensityModel,
    k_i: u64,
    k_j: u64,
    d_max: u64,
    domain: (u64, u64),
    total: f64,
) -> u64 {
    let scaled = if total > 0.0 && total.is_finite() {
        d_max as f64 * density.mass(k_i, k_j) / total
    } else {
        // No density mass over the domain: fall back to interval length.
        d_max as f64 * (k_j - k_i) as f64 / (domain.1 - domain.0) as f64
    };
    scaled.clamp(0.0, d_max as f64).ceil() as u64
}

/// Per-key placeholder counts for a sorted key run: entry `i > 0` is the gap
/// before `keys[i]`; the first key gets the rounded-up mean of the others so
/// that inserts below the run's first key also find room.
pub fn gap_counts(keys: &[u64], density: &DensityModel, d_max: u64) -> Vec<u64> {
    let n = keys.len();
    let mut gaps = vec![0u64; n];
    if n < 2 {
        return gaps;
    }
    let domain = (keys[0], keys[n - 1]);
    let total = density.mass(domain.0, domain.1);
    for i in 1..n {
        gaps[i] = gap_with_total(density, keys[i - 1], keys[i], d_max, domain, total);
    }
    let rest: u64 = gaps[1..].iter().sum();
    gaps[0] = rest.div_ceil((n - 1) as u64);
    gaps
}

/// Lays out `pairs` (sorted, unique keys) with `gap_counts` NULL slots
/// preceding each key.
pub fn expand_segment(
    pairs: &[(u64, u64)],
    density: &DensityModel,
    d_max: u64,
    key_range: (u64, u64),
) -> GappedSegment {
    debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
    let keys: Vec<u64> = pairs.iter().map(|p| p.0).collect();
    let gaps = gap_counts(&keys, density, d_max);
    let total = pairs.len() + gaps.iter().sum::<u64>() as usize;
    let mut slots = Vec::with_capacity(total);
    for (&(key, value), &g) in pairs.iter().zip(&gaps) {
        slots.extend(std::iter::repeat_n(None, g as usize));
        slots.push(Some(Entry { key, value }));
    }
    GappedSegment::from_slots(slots, key_range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normal(mean: f64, sd: f64) -> DensityModel {
        DensityModel::from_components(vec![GaussianComponent {
            weight: 1.0,
            mean,
            variance: sd * sd,
        }])
    }

    /// Composite Simpson quadrature of a Gaussian-mixture pdf; independent of
    /// the erfc-based CDF used by the implementation.
    fn quad_mass(d: &DensityModel, a: f64, b: f64) -> f64 {
        let pdf = |x: f64| {
            d.components()
                .iter()
                .map(|c| {
                    c.weight * (-(x - c.mean).powi(2) / (2.0 * c.variance)).exp()
                        / (2.0 * std::f64::consts::PI * c.variance).sqrt()
                })
                .sum::<f64>()
        };
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn uniform_gap_is_proportional_to_length() {
        let u = DensityModel::uniform();
        assert_eq!(gap_size(&u, 20, 40, 10, (0, 100)).unwrap(), 2);
        assert_eq!(gap_size(&u, 0, 100, 10, (0, 100)).unwrap(), 10);
    }

    #[test]
    fn full_domain_gap_equals_d_max() {
        for d in [DensityModel::uniform(), normal(50.0, 10.0), normal(1e6, 3.0)] {
            for d_max in [0, 1, 17, 64] {
                assert_eq!(gap_size(&d, 3, 97, d_max, (3, 97)).unwrap(), d_max);
            }
        }
    }

    #[test]
    fn gaussian_gap_matches_quadrature() {
        let d = normal(50.0, 10.0);
        let oracle = (100.0 * quad_mass(&d, 40.0, 60.0) / quad_mass(&d, 0.0, 100.0)).ceil();
        assert_eq!(oracle, 69.0);
        assert_eq!(gap_size(&d, 40, 60, 100, (0, 100)).unwrap(), 69);
    }

    #[test]
    fn gap_size_errors() {
        let u = DensityModel::uniform();
        assert_eq!(gap_size(&u, 5, 5, 4, (0, 9)), Err(NullifierError::EmptyInterval));
        assert_eq!(gap_size(&u, 6, 5, 4, (0, 9)), Err(NullifierError::EmptyInterval));
        assert_eq!(gap_size(&u, 1, 50, 4, (0, 9)), Err(NullifierError::OutsideDomain));
    }

    #[test]
    fn figure_layout_with_alpha_two() {
        let pairs = [(1, 10), (2, 20), (3, 30)];
        let s = expand_segment(&pairs, &DensityModel::uniform(), 4, (0, 10));
        let layout: Vec<Option<u64>> = s.slots().iter().map(|s| s.map(|e| e.key)).collect();
        assert_eq!(
            layout,
            [None, None, Some(1), None, None, Some(2), None, None, Some(3)]
        );
        assert_eq!(s.alpha(), 2.0);
        assert_eq!(s.gaps(), vec![2, 2, 2]);
    }

    #[test]
    fn single_key_has_no_gaps() {
        let s = expand_segment(&[(42, 1)], &normal(42.0, 1.0), 64, (0, 100));
        assert_eq!(s.len(), 1);
        assert_eq!(s.alpha(), 0.0);
    }

    #[test]
    fn concentrated_density_puts_gaps_where_updates_land() {
        let d = normal(25.0, 2.0);
        let keys = [10u64, 20, 30, 40];
        let g = gap_counts(&keys, &d, 64);
        let total = quad_mass(&d, 10.0, 40.0);
        let oracle: Vec<u64> = keys
            .windows(2)
            .map(|w| (64.0 * quad_mass(&d, w[0] as f64, w[1] as f64) / total).ceil() as u64)
            .collect();
        assert_eq!(&g[1..], &oracle[..]);
        assert!(g[2] > g[1] && g[2] > g[3], "{g:?}");
    }

    #[test]
    fn zero_d_max_means_no_placeholders() {
        let pairs: Vec<(u64, u64)> = (0..50).map(|k| (k * 7, k)).collect();
        let s = expand_segment(&pairs, &DensityModel::uniform(), 0, (0, 1000));
        assert_eq!(s.null_count(), 0);
    }

    fn mixture() -> impl Strategy<Value = DensityModel> {
        proptest::collection::vec((0.1f64..1.0, 0.0f64..1000.0, 1.0f64..200.0), 1..4).prop_map(
            |cs| {
                DensityModel::from_components(
                    cs.into_iter()
                        .map(|(weight, mean, sd)| GaussianComponent {
                            weight,
                            mean,
                            variance: sd * sd,
                        })
                        .collect(),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn ceiling_slack_is_at_most_one(
            d in mixture(),
            mut pts in proptest::collection::btree_set(0u64..1000, 3),
            d_max in 0u64..200,
        ) {
            let v: Vec<u64> = std::mem::take(&mut pts).into_iter().collect();
            let (a, b, c) = (v[0], v[1], v[2]);
            let dom = (a, c);
            let whole = gap_size(&d, a, c, d_max, dom).unwrap();
            let parts = gap_size(&d, a, b, d_max, dom).unwrap() + gap_size(&d, b, c, d_max, dom).unwrap();
            prop_assert!(whole <= parts && whole + 1 >= parts, "{whole} vs {parts}");
        }

        #[test]
        fn expansion_preserves_keys_and_bounds_gaps(
            d in mixture(),
            keys in proptest::collection::btree_set(0u64..5000, 1..200),
            d_max in 0u64..128,
        ) {
            let pairs: Vec<(u64, u64)> = keys.iter().map(|&k| (k, k ^ 0xff)).collect();
            let s = expand_segment(&pairs, &d, d_max, (0, 5000));
            let projected: Vec<(u64, u64)> = s.entries().map(|(_, e)| (e.key, e.value)).collect();
            prop_assert_eq!(&projected, &pairs);
            s.check_invariants().unwrap();
            let gaps = s.gaps();
            let pair_sum: usize = gaps[1..].iter().sum();
            let pairs_n = pairs.len() - 1;
            prop_assert!(pair_sum <= d_max as usize + pairs_n);
            if pairs_n > 0 {
                let covered = d.mass(pairs[0].0, pairs[pairs_n].0);
                if covered > 0.0 {
                    prop_assert!(pair_sum as f64 + pairs_n as f64 >= d_max as f64 - 1e-9);
                }
            }
            prop_assert_eq!(s.len(), s.live_count() + gaps.iter().sum::<usize>());
        }
    }
}
