//! Learned position models.
//!
//! A model maps a key to its estimated rank among the sorted keys it was trained
//! on and certifies a maximum absolute error over those keys. Any monotone,
//! order-preserving model can back the index; [`SplineModel`] (a greedy
//! error-bounded linear spline) is the default and [`LinearModel`] a cheaper
//! alternate.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("keys not strictly sorted")]
    NotStrictlySorted,
    #[error("invalid error budget: must be at least 1")]
    InvalidBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Maximum deviation, in positions, the spline may have at a training key.
    pub spline_error_budget: u64,
    /// Smallest key volume worth fitting a dedicated model for.
    pub min_keys_per_model: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            spline_error_budget: 128,
            min_keys_per_model: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.spline_error_budget == 0 {
            return Err(ModelError::InvalidBudget);
        }
        Ok(())
    }
}

/// Monotone key-to-rank predictor with a certified error bound.
pub trait IndexModel: fmt::Debug + Send + Sync {
    /// Estimated rank of `key`; keys outside the trained domain clamp to the
    /// first or last rank.
    fn predict(&self, key: u64) -> f64;
    /// Maximum `|predict(k) - i|` over the training keys.
    fn error_bound(&self) -> u64;
    fn key_count(&self) -> usize;
    fn domain(&self) -> (u64, u64);
    /// Bytes held by the model parameters.
    fn size_bytes(&self) -> usize;
}

pub type SharedModel = Arc<dyn IndexModel>;

/// Something that can fit an [`IndexModel`] to a sorted key set.
pub trait ModelTrainer: Send + Sync {
    fn train(&self, keys: &[u64], cfg: &ModelConfig) -> Result<SharedModel, ModelError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SplineTrainer;

impl ModelTrainer for SplineTrainer {
    fn train(&self, keys: &[u64], cfg: &ModelConfig) -> Result<SharedModel, ModelError> {
        Ok(Arc::new(SplineModel::train(keys, cfg)?))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearTrainer;

impl ModelTrainer for LinearTrainer {
    fn train(&self, keys: &[u64], _cfg: &ModelConfig) -> Result<SharedModel, ModelError> {
        Ok(Arc::new(LinearModel::train(keys)?))
    }
}

fn check_sorted(keys: &[u64]) -> Result<(), ModelError> {
    if keys.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if keys.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ModelError::NotStrictlySorted);
    }
    Ok(())
}

/// Knot of a spline: a training key and its rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplinePoint {
    pub key: u64,
    pub pos: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineModel {
    points: Vec<SplinePoint>,
    error_bound: u64,
    key_count: usize,
}

/// Sign of the cross product of (b - a) and (c - a).
fn orientation(a: (i128, i128), b: (i128, i128), c: (i128, i128)) -> std::cmp::Ordering {
    let lhs = (b.1 - a.1) * (c.0 - a.0);
    let rhs = (c.1 - a.1) * (b.0 - a.0);
    lhs.cmp(&rhs)
}

impl SplineModel {
    /// Fits a greedy corridor spline: a knot is emitted whenever the next point
    /// would push some covered point outside `±budget` of the interpolating line.
    pub fn train(keys: &[u64], cfg: &ModelConfig) -> Result<Self, ModelError> {
        check_sorted(keys)?;
        cfg.validate()?;
        let budget = cfg.spline_error_budget as i128;

        let pt = |i: usize| (keys[i] as i128, i as i128);
        let mut points = vec![SplinePoint { key: keys[0], pos: 0 }];
        if keys.len() > 1 {
            let mut base = pt(0);
            let mut upper = (keys[1] as i128, 1 + budget);
            let mut lower = (keys[1] as i128, 1 - budget);
            for i in 2..keys.len() {
                let cur = pt(i);
                // `cur` must stay between the lower and upper corridor rays from `base`.
                let above_upper = orientation(base, upper, cur).is_lt();
                let below_lower = orientation(base, lower, cur).is_gt();
                if above_upper || below_lower {
                    let prev = pt(i - 1);
                    points.push(SplinePoint {
                        key: keys[i - 1],
                        pos: (i - 1) as u64,
                    });
                    base = prev;
                    upper = (cur.0, cur.1 + budget);
                    lower = (cur.0, cur.1 - budget);
                } else {
                    let up = (cur.0, cur.1 + budget);
                    let lo = (cur.0, cur.1 - budget);
                    if orientation(base, upper, up).is_gt() {
                        upper = up;
                    }
                    if orientation(base, lower, lo).is_lt() {
                        lower = lo;
                    }
                }
            }
            let last = keys.len() - 1;
            points.push(SplinePoint {
                key: keys[last],
                pos: last as u64,
            });
        }

        let mut model = Self {
            points,
            error_bound: 0,
            key_count: keys.len(),
        };
        model.error_bound = certify(&model, keys);
        Ok(model)
    }

    pub fn points(&self) -> &[SplinePoint] {
        &self.points
    }
}

/// Exhaustive scan of the training keys for the worst-case rank error.
fn certify(model: &dyn IndexModel, keys: &[u64]) -> u64 {
    keys.iter()
        .enumerate()
        .map(|(i, &k)| (model.predict(k) - i as f64).abs())
        .fold(0.0f64, f64::max)
        .ceil() as u64
}

impl IndexModel for SplineModel {
    fn predict(&self, key: u64) -> f64 {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if key <= first.key {
            return first.pos as f64;
        }
        if key >= last.key {
            return last.pos as f64;
        }
        let idx = self.points.partition_point(|p| p.key <= key);
        let (a, b) = (self.points[idx - 1], self.points[idx]);
        // Exact integer part plus a fraction in [0, 1] keeps the result on the
        // correct side of every integer bound.
        let num = (key - a.key) as u128 * (b.pos - a.pos) as u128;
        let den = (b.key - a.key) as u128;
        let whole = (num / den) as u64;
        let frac = (num % den) as f64 / den as f64;
        (a.pos + whole) as f64 + frac
    }

    fn error_bound(&self) -> u64 {
        self.error_bound
    }

    fn key_count(&self) -> usize {
        self.key_count
    }

    fn domain(&self) -> (u64, u64) {
        (self.points[0].key, self.points[self.points.len() - 1].key)
    }

    fn size_bytes(&self) -> usize {
        std::mem::size_of::<Self>() + self.points.len() * std::mem::size_of::<SplinePoint>()
    }
}

/// Least-squares line through (key, rank), clamped to the trained domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    min_key: u64,
    max_key: u64,
    slope: f64,
    intercept: f64,
    error_bound: u64,
    key_count: usize,
}

impl LinearModel {
    pub fn train(keys: &[u64]) -> Result<Self, ModelError> {
        check_sorted(keys)?;
        let n = keys.len() as f64;
        let min_key = keys[0];
        let xs = keys.iter().map(|&k| (k - min_key) as f64);
        let mean_x = xs.clone().sum::<f64>() / n;
        let mean_y = (n - 1.0) / 2.0;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, x) in xs.enumerate() {
            sxy += (x - mean_x) * (i as f64 - mean_y);
            sxx += (x - mean_x) * (x - mean_x);
        }
        let slope = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
        let mut model = Self {
            min_key,
            max_key: keys[keys.len() - 1],
            slope,
            intercept: mean_y - slope * mean_x,
            error_bound: 0,
            key_count: keys.len(),
        };
        model.error_bound = certify(&model, keys);
        Ok(model)
    }
}

impl IndexModel for LinearModel {
    fn predict(&self, key: u64) -> f64 {
        let key = key.clamp(self.min_key, self.max_key);
        let last = (self.key_count - 1) as f64;
        (self.intercept + self.slope * (key - self.min_key) as f64).clamp(0.0, last)
    }

    fn error_bound(&self) -> u64 {
        self.error_bound
    }

    fn key_count(&self) -> usize {
        self.key_count
    }

    fn domain(&self) -> (u64, u64) {
        (self.min_key, self.max_key)
    }

    fn size_bytes(&self) -> usize {
        std::mem::size_of::<Self>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, SeedableRng};
    use rand_distr::{Distribution, LogNormal};

    fn cfg(budget: u64) -> ModelConfig {
        ModelConfig {
            spline_error_budget: budget,
            ..ModelConfig::default()
        }
    }

    fn lognormal_keys(n: usize, seed: u64) -> Vec<u64> {
        let dist = LogNormal::new(0.0, 1.0).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        let mut keys: Vec<u64> = (0..n)
            .map(|_| (Distribution::<f64>::sample(&dist, &mut rng) * 1e9).round() as u64)
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    fn brute_force_max_error(model: &dyn IndexModel, keys: &[u64]) -> f64 {
        keys.iter()
            .enumerate()
            .map(|(i, &k)| (model.predict(k) - i as f64).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn equispaced_keys_fit_exactly() {
        let keys: Vec<u64> = (0..1000).collect();
        let m = SplineModel::train(&keys, &cfg(32)).unwrap();
        assert_eq!(m.error_bound(), 0);
        assert_eq!(m.points().len(), 2);
        assert_eq!(m.predict(500), 500.0);
        for &k in &keys {
            assert_eq!(m.predict(k), k as f64);
        }
    }

    #[test]
    fn single_key_model() {
        let m = SplineModel::train(&[42], &cfg(7)).unwrap();
        assert_eq!(m.predict(42), 0.0);
        assert_eq!(m.error_bound(), 0);
        assert_eq!(m.domain(), (42, 42));
    }

    #[test]
    fn out_of_domain_clamps() {
        let keys: Vec<u64> = (10..20).map(|k| k * 3).collect();
        let m = SplineModel::train(&keys, &cfg(4)).unwrap();
        assert_eq!(m.predict(0), 0.0);
        assert_eq!(m.predict(u64::MAX), (keys.len() - 1) as f64);
    }

    #[test]
    fn lognormal_error_certified_by_scan() {
        let keys = lognormal_keys(1000, 7);
        let m = SplineModel::train(&keys, &cfg(32)).unwrap();
        let worst = brute_force_max_error(&m, &keys);
        assert!(worst <= 32.0, "worst {worst}");
        assert!(worst <= m.error_bound() as f64);
        assert!(m.error_bound() <= 32);
        let p = m.predict(keys[100]);
        assert!((68.0..=132.0).contains(&p), "predict {p}");
    }

    #[test]
    fn training_errors() {
        assert_eq!(
            SplineModel::train(&[], &cfg(4)).unwrap_err(),
            ModelError::EmptyTrainingSet
        );
        assert_eq!(
            SplineModel::train(&[1, 3, 3], &cfg(4)).unwrap_err(),
            ModelError::NotStrictlySorted
        );
        assert_eq!(
            SplineModel::train(&[5, 1], &cfg(4)).unwrap_err(),
            ModelError::NotStrictlySorted
        );
        assert_eq!(
            SplineModel::train(&[1, 2], &cfg(0)).unwrap_err(),
            ModelError::InvalidBudget
        );
    }

    #[test]
    fn training_is_deterministic() {
        let keys = lognormal_keys(5000, 3);
        let a = SplineModel::train(&keys, &cfg(16)).unwrap();
        let b = SplineModel::train(&keys, &cfg(16)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_model_certifies_its_bound() {
        let keys = lognormal_keys(2000, 11);
        let m = LinearModel::train(&keys).unwrap();
        assert!(brute_force_max_error(&m, &keys) <= m.error_bound() as f64);
        let eq: Vec<u64> = (0..100).map(|k| k * 10).collect();
        let m = LinearModel::train(&eq).unwrap();
        assert_eq!(m.error_bound(), 0);
    }

    proptest! {
        #[test]
        fn spline_invariants(
            raw in proptest::collection::btree_set(any::<u64>(), 1..400),
            budget in 1u64..64,
            probes in proptest::collection::vec((any::<u64>(), any::<u64>()), 32),
        ) {
            let keys: Vec<u64> = raw.into_iter().collect();
            let m = SplineModel::train(&keys, &cfg(budget)).unwrap();
            prop_assert!(m.error_bound() <= budget);
            prop_assert!(brute_force_max_error(&m, &keys) <= m.error_bound() as f64);
            for w in m.points().windows(2) {
                prop_assert!(w[0].key < w[1].key && w[0].pos < w[1].pos);
            }
            for (a, b) in probes {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(m.predict(lo) <= m.predict(hi));
            }
        }
    }
}
