//! Reproducible long-tailed regression benchmark.
//!
//! Targets live on `[0, 100]` split into `K` equal bins whose sampling
//! weights decay geometrically (`decay^k` for bin `k`). Every bin first
//! receives one sample; the remaining `n − K` are drawn from the weights.
//! Within a bin the target is uniform.
//!
//! Features are a fixed smooth map of the target plus Gaussian noise:
//!
//! ```text
//! b0 = y/100   b1 = sin(y/10)   b2 = cos(y/15)   b3 = (y/100)^2
//! f_j = b_j                                   for j < 4
//! f_j = Σ_i cos(0.7 (j+1)(i+1)) · b_i         for j ≥ 4
//! ```
//!
//! and every feature receives independent `N(0, σ²)` noise.

use serde::{Deserialize, Serialize};

use super::binning::BinSpec;
use super::dataset::LabeledFeatureSet;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, SeededRng};

pub const SYNTHETIC_Y_MIN: f64 = 0.0;
pub const SYNTHETIC_Y_MAX: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub m: usize,
    pub bins: usize,
    pub decay: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            m: 8,
            bins: 20,
            decay: 0.7,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Noise-free feature map of a target value.
pub fn feature_map(y: f64, m: usize) -> Vec<f64> {
    let base = [y / 100.0, (y / 10.0).sin(), (y / 15.0).cos(), (y / 100.0).powi(2)];
    (0..m)
        .map(|j| {
            if j < 4 {
                base[j]
            } else {
                base.iter()
                    .enumerate()
                    .map(|(i, b)| (0.7 * (j + 1) as f64 * (i + 1) as f64).cos() * b)
                    .sum()
            }
        })
        .collect()
}

pub fn make_imbalanced_synthetic(config: &SyntheticConfig) -> Result<LabeledFeatureSet> {
    make_with_stream(config, "synthetic-data")
}

/// Same generator on a caller-chosen substream (test sets use a different one).
pub fn make_with_stream(config: &SyntheticConfig, stream: &str) -> Result<LabeledFeatureSet> {
    if config.m == 0 {
        return Err(Error::value("data.m", "feature width must be positive"));
    }
    if config.n < config.bins {
        return Err(Error::value(
            "data.n",
            format!("n = {} is smaller than the bin count {}", config.n, config.bins),
        ));
    }
    if !(config.decay > 0.0) || !config.decay.is_finite() {
        return Err(Error::value("data.decay", format!("{} must be positive", config.decay)));
    }
    if !(config.noise >= 0.0) {
        return Err(Error::value(
            "data.noise",
            format!("{} must be nonnegative", config.noise),
        ));
    }
    let spec = BinSpec::new(SYNTHETIC_Y_MIN, SYNTHETIC_Y_MAX, config.bins)?;
    let mut rng = SeededRng::substream(config.seed, stream, 0);

    let weights: Vec<f64> = (0..config.bins).map(|k| config.decay.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(config.bins);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cdf.push(acc);
    }

    let mut bins: Vec<usize> = (0..config.bins).collect();
    for _ in config.bins..config.n {
        let u = rng.uniform();
        let k = cdf.iter().position(|&c| u < c).unwrap_or(config.bins - 1);
        bins.push(k);
    }
    rng.shuffle(&mut bins);

    let mut data = Vec::with_capacity(config.n * config.m);
    let mut targets = Vec::with_capacity(config.n);
    for k in bins {
        let y = rng.uniform_range(spec.edges[k], spec.edges[k + 1]);
        targets.push(y);
        for f in feature_map(y, config.m) {
            data.push(f + config.noise * rng.normal());
        }
    }
    let features = Matrix::from_vec(config.n, config.m, data)?;
    Ok(LabeledFeatureSet::new(features, targets)?.with_name("synthetic"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(set: &LabeledFeatureSet, k: usize) -> Vec<usize> {
        BinSpec::new(0.0, 100.0, k).unwrap().counts(&set.targets).unwrap()
    }

    #[test]
    fn uniform_when_no_decay() {
        let cfg = SyntheticConfig {
            n: 20_000,
            decay: 1.0,
            ..Default::default()
        };
        let set = make_imbalanced_synthetic(&cfg).unwrap();
        let c = counts(&set, 20);
        // expected 1000 per bin, multinomial sd ≈ 31
        assert!(c.iter().all(|&x| (850..=1150).contains(&x)), "{c:?}");
    }

    #[test]
    fn decay_produces_long_tail() {
        let set = make_imbalanced_synthetic(&SyntheticConfig::default()).unwrap();
        let c = counts(&set, 20);
        assert_eq!(c.iter().sum::<usize>(), 5000);
        assert!(c.iter().all(|&x| x >= 1));
        // expected head ≈ 1500, tail ≈ 1.7 (plus the guaranteed sample)
        assert!(c[0] > 1300, "{c:?}");
        assert!(c[19] < 10, "{c:?}");
        assert!(c[0] as f64 / c[19] as f64 > 100.0);
    }

    #[test]
    fn fixed_seed_reproduces() {
        let a = make_imbalanced_synthetic(&SyntheticConfig::default()).unwrap();
        let b = make_imbalanced_synthetic(&SyntheticConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = make_imbalanced_synthetic(&SyntheticConfig {
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_samples() {
        let cfg = SyntheticConfig {
            n: 10,
            bins: 20,
            ..Default::default()
        };
        assert!(make_imbalanced_synthetic(&cfg).is_err());
    }

    #[test]
    fn feature_map_components() {
        let f = feature_map(30.0, 6);
        assert_eq!(f[0], 0.3);
        assert_eq!(f[1], 3.0f64.sin());
        assert_eq!(f[2], 2.0f64.cos());
        assert!((f[3] - 0.09).abs() < 1e-15);
        assert_eq!(f.len(), 6);
        assert_eq!(feature_map(30.0, 2).len(), 2);
    }
}
