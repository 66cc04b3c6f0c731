use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Per-dimension affine standardization (population statistics).
///
/// Constant dimensions keep `std = 1` and are flagged in `constant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() < 2 {
            return Err(Error::shape(format!(
                "standardization needs at least 2 rows, got {}",
                x.rows()
            )));
        }
        let n = x.rows() as f64;
        let mean = x.column_means();
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((v, r), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (r - m).powi(2);
            }
        }
        let mut std = Vec::with_capacity(x.cols());
        let mut constant = Vec::with_capacity(x.cols());
        for (j, v) in var.into_iter().enumerate() {
            let s = (v / n).sqrt();
            // relative floor so that roundoff on a constant column still counts as constant
            if s <= 1e-12 * mean[j].abs().max(1.0) {
                log::warn!("feature dimension {j} is constant; std pinned to 1");
                std.push(1.0);
                constant.push(true);
            } else {
                std.push(s);
                constant.push(false);
            }
        }
        Ok(Self { mean, std, constant })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            constant: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::shape(format!(
                "standardizer fitted on {} dims, applied to {}",
                self.dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        self.check(z)?;
        let mut out = z.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }
}

pub fn standardize_fit_transform(x: &Matrix) -> Result<(Standardizer, Matrix)> {
    let s = Standardizer::fit(x)?;
    let z = s.transform(x)?;
    Ok((s, z))
}

/// Maps targets from `[lo, hi]` onto `[0, 1]` for conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalizer {
    pub lo: f64,
    pub hi: f64,
}

impl TargetNormalizer {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!("target range [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.lo) / (self.hi - self.lo)
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }
}
