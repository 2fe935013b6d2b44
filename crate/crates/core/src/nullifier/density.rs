//! Estimate of the incoming-update key distribution.
//!
//! Until enough update keys have been observed the density is uniform over the
//! key space; afterwards it is a one-dimensional Gaussian mixture fitted with EM.
//! Interval masses use the complementary error function, never sampling.

use std::f64::consts::SQRT_2;

use thiserror::Error;

/// ln(2π)
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DensityError {
    #[error("invalid component count")]
    InvalidComponentCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GaussianComponent {
    fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Probability mass this component assigns to `[a, b]` (unweighted).
    fn mass(&self, a: f64, b: f64) -> f64 {
        let s = self.std_dev() * SQRT_2;
        let za = (a - self.mean) / s;
        let zb = (b - self.mean) / s;
        // Work in whichever tail keeps both terms small.
        if za >= 0.0 {
            0.5 * (libm::erfc(za) - libm::erfc(zb))
        } else if zb <= 0.0 {
            0.5 * (libm::erfc(-zb) - libm::erfc(-za))
        } else {
            1.0 - 0.5 * (libm::erfc(-za) + libm::erfc(zb))
        }
    }

}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub components: usize,
    pub min_fit_samples: usize,
    pub max_iterations: usize,
    /// EM stops when the mean per-sample log-likelihood changes by less than this.
    pub tolerance: f64,
    /// Larger inputs are thinned to this many evenly spaced order statistics.
    pub max_fit_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            components: 4,
            min_fit_samples: 256,
            max_iterations: 100,
            tolerance: 1e-6,
            max_fit_samples: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    components: Vec<GaussianComponent>,
    sample_count: usize,
    fallback_uniform: bool,
}

impl Default for DensityModel {
    fn default() -> Self {
        Self::uniform()
    }
}

impl DensityModel {
    /// Uniform (Lebesgue) density over the whole key space.
    pub fn uniform() -> Self {
        Self {
            components: Vec::new(),
            sample_count: 0,
            fallback_uniform: true,
        }
    }

    /// Mixture built from explicit components; weights are renormalised.
    pub fn from_components(components: Vec<GaussianComponent>) -> Self {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        let components = components
            .into_iter()
            .map(|c| GaussianComponent {
                weight: c.weight / total,
                ..c
            })
            .collect();
        Self {
            components,
            sample_count: 0,
            fallback_uniform: false,
        }
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn is_uniform(&self) -> bool {
        self.fallback_uniform
    }

    /// Unnormalised mass of `[a, b]`. For the uniform density this is the
    /// interval length.
    pub fn mass(&self, a: u64, b: u64) -> f64 {
        debug_assert!(a <= b);
        if self.fallback_uniform {
            return (b - a) as f64;
        }
        let (a, b) = (a as f64, b as f64);
        self.components
            .iter()
            .map(|c| c.weight * c.mass(a, b))
            .sum::<f64>()
            .max(0.0)
    }

    pub fn size_bytes(&self) -> usize {
        std::mem::size_of::<Self>()
            + self.components.len() * std::mem::size_of::<GaussianComponent>()
    }
}

/// Result of an EM run, including the per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: DensityModel,
    pub log_likelihood: Vec<f64>,
}

pub fn fit_update_distribution(
    observed: &[u64],
    cfg: &FitConfig,
) -> Result<DensityModel, DensityError> {
    fit_with_trace(observed, cfg).map(|r| r.model)
}

/// Deterministic EM: components start at evenly spaced sample quantiles with
/// equal weights and the pooled variance; variances are floored at
/// `1e-9 * span^2` where `span` is the observed sample range (at least 1).
pub fn fit_with_trace(observed: &[u64], cfg: &FitConfig) -> Result<FitReport, DensityError> {
    if cfg.components == 0 {
        return Err(DensityError::InvalidComponentCount);
    }
    if observed.len() < cfg.min_fit_samples || observed.is_empty() {
        let mut model = DensityModel::uniform();
        model.sample_count = observed.len();
        return Ok(FitReport {
            model,
            log_likelihood: Vec::new(),
        });
    }

    let mut xs: Vec<f64> = observed.iter().map(|&k| k as f64).collect();
    xs.sort_by(f64::total_cmp);
    let m = cfg.max_fit_samples.max(1);
    if xs.len() > m {
        let n = xs.len();
        xs = (0..m).map(|i| xs[(2 * i + 1) * n / (2 * m)]).collect();
    }
    let n = xs.len();
    let lo = xs[0];
    let hi = xs[n - 1];
    let span = (hi - lo).max(1.0);
    // Standardise to [0, 1]-ish coordinates for numerical stability.
    let scale = span;
    let ys: Vec<f64> = xs.iter().map(|x| (x - lo) / scale).collect();
    let floor = 1e-9;

    let mean = ys.iter().sum::<f64>() / n as f64;
    let pooled = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64).max(floor);
    let mut k = cfg.components;
    let mut comps: Vec<GaussianComponent> = (0..k)
        .map(|i| {
            let q = ((i as f64 + 0.5) / k as f64 * n as f64) as usize;
            GaussianComponent {
                weight: 1.0 / k as f64,
                mean: ys[q.min(n - 1)],
                variance: pooled,
            }
        })
        .collect();

    let mut resp = vec![0.0f64; n * k];
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iterations {
        // E-step with log-sum-exp.
        let mut ll = 0.0;
        let consts: Vec<(f64, f64, f64)> = comps
            .iter()
            .map(|c| (c.mean, 0.5 / c.variance, c.weight.ln() - 0.5 * (c.variance.ln() + LN_2PI)))
            .collect();
        for (i, &y) in ys.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            let mut max = f64::NEG_INFINITY;
            for (r, &(mu, half_prec, c0)) in row.iter_mut().zip(&consts) {
                let d = y - mu;
                *r = c0 - d * d * half_prec;
                max = max.max(*r);
            }
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - max).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            ll += max + sum.ln();
        }
        // Report likelihood in the original key coordinates.
        let ll_keys = ll - n as f64 * scale.ln();
        trace.push(ll_keys);
        let per_sample = ll / n as f64;
        if (per_sample - prev).abs() < cfg.tolerance {
            break;
        }
        prev = per_sample;

        // M-step.
        for (j, c) in comps.iter_mut().enumerate() {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk <= f64::MIN_POSITIVE {
                c.weight = 0.0;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + j] * ys[i]).sum::<f64>() / nk;
            let var = (0..n)
                .map(|i| resp[i * k + j] * (ys[i] - mu) * (ys[i] - mu))
                .sum::<f64>()
                / nk;
            c.weight = nk / n as f64;
            c.mean = mu;
            c.variance = var.max(floor);
        }
        comps.retain(|c| c.weight > 0.0);
        k = comps.len();
    }

    let total: f64 = comps.iter().map(|c| c.weight).sum();
    let components = comps
        .into_iter()
        .map(|c| GaussianComponent {
            weight: c.weight / total,
            mean: lo + c.mean * scale,
            variance: c.variance * scale * scale,
        })
        .collect();
    Ok(FitReport {
        model: DensityModel {
            components,
            sample_count: observed.len(),
            fallback_uniform: false,
        },
        log_likelihood: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn normal_samples(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<u64> {
        let d = Normal::new(mean, sd).unwrap();
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| { let x: f64 = d.sample(&mut rng); x.round().max(0.0) as u64 })
            .collect()
    }

    #[test]
    fn too_few_samples_fall_back_to_uniform() {
        let cfg = FitConfig {
            components: 3,
            ..FitConfig::default()
        };
        let d = fit_update_distribution(&[], &cfg).unwrap();
        assert!(d.is_uniform());
        let d = fit_update_distribution(&[1, 2, 3], &cfg).unwrap();
        assert!(d.is_uniform());
        assert_eq!(d.sample_count(), 3);
    }

    #[test]
    fn zero_components_rejected() {
        let cfg = FitConfig {
            components: 0,
            ..FitConfig::default()
        };
        assert_eq!(
            fit_update_distribution(&[1; 1000], &cfg).unwrap_err(),
            DensityError::InvalidComponentCount
        );
    }

    #[test]
    fn single_gaussian_recovers_sample_moments() {
        // Samples are rounded to integers; the oracle uses the same rounded values.
        let xs = normal_samples(10_000, 100.0, 5.0, 42);
        let n = xs.len() as f64;
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
        let cfg = FitConfig {
            components: 1,
            max_fit_samples: usize::MAX,
            ..FitConfig::default()
        };
        let d = fit_update_distribution(&xs, &cfg).unwrap();
        let c = d.components()[0];
        assert!((c.mean - 100.0).abs() <= 0.5, "mean {}", c.mean);
        assert!((c.variance - 25.0).abs() <= 2.5, "variance {}", c.variance);
        assert!((c.mean - mean).abs() < 1e-6);
        assert!((c.variance - var).abs() < 1e-6 * var);
        assert!((c.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thinning_keeps_the_shape() {
        let xs = normal_samples(50_000, 1e6, 1e3, 5);
        let cfg = FitConfig {
            components: 1,
            ..FitConfig::default()
        };
        let d = fit_update_distribution(&xs, &cfg).unwrap();
        assert_eq!(d.sample_count(), 50_000);
        let c = d.components()[0];
        assert!((c.mean - 1e6).abs() < 20.0, "mean {}", c.mean);
        assert!((c.variance.sqrt() - 1e3).abs() < 20.0, "sd {}", c.variance.sqrt());
    }

    #[test]
    fn degenerate_cluster_hits_variance_floor() {
        let xs = vec![7u64; 500];
        let cfg = FitConfig {
            components: 1,
            ..FitConfig::default()
        };
        let d = fit_update_distribution(&xs, &cfg).unwrap();
        let c = d.components()[0];
        assert_eq!(c.mean, 7.0);
        assert_eq!(c.variance, 1e-9);
    }

    #[test]
    fn em_is_deterministic_and_monotone() {
        let mut xs = normal_samples(3000, 1_000.0, 30.0, 1);
        xs.extend(normal_samples(2000, 5_000.0, 200.0, 2));
        let cfg = FitConfig::default();
        let a = fit_with_trace(&xs, &cfg).unwrap();
        let b = fit_with_trace(&xs, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        for w in a.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        let total: f64 = a.model.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(a.model.components().iter().all(|c| c.variance > 0.0));
    }

    #[test]
    fn gaussian_mass_is_accurate_in_both_tails() {
        let c = GaussianComponent {
            weight: 1.0,
            mean: 0.0,
            variance: 1.0,
        };
        // Phi(1) - Phi(-1)
        assert!((c.mass(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-14);
        // Q(8) - Q(9): tiny but non-zero
        let upper = c.mass(8.0, 9.0);
        assert!((upper - 6.219_831_985_865_787e-16).abs() < 1e-28, "{upper}");
        assert!((c.mass(-9.0, -8.0) - upper).abs() < 1e-28);
    }
}
