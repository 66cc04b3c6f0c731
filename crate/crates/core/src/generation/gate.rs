//! Per-bin Mahalanobis quality gate in standardized feature space.

use serde::{Deserialize, Serialize};

use crate::data::BinSpec;
use crate::error::{Error, Result};
use crate::numeric::linalg::{cholesky, covariance, forward_substitute, trace};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub enabled: bool,
    pub quantile: f64,
    pub min_samples: usize,
    pub shrinkage: f64,
    /// Use a diagonal covariance for bins with no more samples than dimensions.
    pub diagonal_fallback: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            quantile: 0.95,
            min_samples: 5,
            shrinkage: 0.1,
            diagonal_fallback: true,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::value(
                "gate.quantile",
                format!("{} is outside (0, 1]", self.quantile),
            ));
        }
        if !(0.0..=1.0).contains(&self.shrinkage) {
            return Err(Error::value(
                "gate.shrinkage",
                format!("{} is outside [0, 1]", self.shrinkage),
            ));
        }
        if self.min_samples == 0 {
            return Err(Error::value("gate.min_samples", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGate {
    pub mean: Vec<f64>,
    /// Cholesky factor of the regularized covariance.
    pub chol: Matrix,
    pub threshold: f64,
    pub samples: usize,
    pub diagonal: bool,
}

impl BinGate {
    pub fn distance(&self, z: &[f64]) -> f64 {
        let d: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        forward_substitute(&self.chol, &d)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityGate {
    pub dim: usize,
    pub quantile: f64,
    pub min_samples: usize,
    pub shrinkage: f64,
    /// `None` marks an ungated bin.
    pub bins: Vec<Option<BinGate>>,
}

/// Nearest-rank quantile: the `⌈q·n⌉`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Fits per-bin Gaussians to standardized real features.
pub fn fit_gate(features: &Matrix, targets: &[f64], bins: &BinSpec, config: &GateConfig) -> Result<QualityGate> {
    config.validate()?;
    if features.rows() != targets.len() {
        return Err(Error::shape(format!(
            "{} feature rows for {} targets",
            features.rows(),
            targets.len()
        )));
    }
    let m = features.cols();
    let assignment = bins.assign(targets)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins.bins];
    for (i, &b) in assignment.iter().enumerate() {
        members[b].push(i);
    }
    let mut gates = Vec::with_capacity(bins.bins);
    for (bin, idx) in members.iter().enumerate() {
        if idx.len() < config.min_samples {
            gates.push(None);
            continue;
        }
        let x = features.select_rows(idx);
        let n = idx.len();
        let (mean, mut cov) = covariance(&x)?;
        if n > 1 {
            cov.scale(n as f64 / (n - 1) as f64);
        }
        let diagonal = config.diagonal_fallback && n <= m;
        if diagonal {
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        cov.row_mut(i)[j] = 0.0;
                    }
                }
            }
        }
        let rho = config.shrinkage;
        let ridge = rho * trace(&cov) / m as f64;
        cov.scale(1.0 - rho);
        for i in 0..m {
            cov.row_mut(i)[i] += ridge;
        }
        let chol = cholesky(&cov).ok_or(Error::SingularCovariance { bin })?;
        let mut gate = BinGate {
            mean,
            chol,
            threshold: 0.0,
            samples: n,
            diagonal,
        };
        let mut d: Vec<f64> = x.iter_rows().map(|r| gate.distance(r)).collect();
        d.sort_by(f64::total_cmp);
        gate.threshold = nearest_rank(&d, config.quantile);
        gates.push(Some(gate));
    }
    Ok(QualityGate {
        dim: m,
        quantile: config.quantile,
        min_samples: config.min_samples,
        shrinkage: config.shrinkage,
        bins: gates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub accepted: Matrix,
    pub rejected: usize,
    /// Candidates passed without a check because the bin is ungated.
    pub ungated: usize,
}

impl QualityGate {
    fn bin(&self, bin: usize) -> Result<&Option<BinGate>> {
        self.bins.get(bin).ok_or(Error::UnknownBin {
            bin,
            bins: self.bins.len(),
        })
    }

    /// Mahalanobis distance to the bin model, `None` for ungated bins.
    pub fn distance(&self, bin: usize, z: &[f64]) -> Result<Option<f64>> {
        if z.len() != self.dim {
            return Err(Error::shape(format!(
                "gate expects width {}, got {}",
                self.dim,
                z.len()
            )));
        }
        Ok(self.bin(bin)?.as_ref().map(|g| g.distance(z)))
    }

    pub fn is_gated(&self, bin: usize) -> Result<bool> {
        Ok(self.bin(bin)?.is_some())
    }

    pub fn gated_bins(&self) -> usize {
        self.bins.iter().filter(|b| b.is_some()).count()
    }
}

/// Keeps candidates with `d_M ≤ τ_y`, in their original order.
pub fn gate_filter(gate: &QualityGate, candidates: &Matrix, bin: usize) -> Result<GateOutcome> {
    let model = gate.bin(bin)?;
    if candidates.rows() > 0 && candidates.cols() != gate.dim {
        return Err(Error::shape(format!(
            "gate expects width {}, got {}",
            gate.dim,
            candidates.cols()
        )));
    }
    let Some(model) = model else {
        return Ok(GateOutcome {
            accepted: candidates.clone(),
            rejected: 0,
            ungated: candidates.rows(),
        });
    };
    let keep: Vec<usize> = candidates
        .iter_rows()
        .enumerate()
        .filter(|(_, r)| model.distance(r) <= model.threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(GateOutcome {
        rejected: candidates.rows() - keep.len(),
        accepted: if candidates.rows() == 0 {
            Matrix::zeros(0, gate.dim)
        } else {
            candidates.select_rows(&keep)
        },
        ungated: 0,
    })
}
