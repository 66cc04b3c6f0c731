use serde::{Deserialize, Serialize};

use super::net::Grads;
use crate::error::{Error, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[&[f64]], lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[&[f64]], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients leave parameters and state
    /// untouched and are reported as an error.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &Grads) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&grads.0).zip(&self.first) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape("parameter/gradient shape differs from optimizer state"));
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut adam = AdamState::new(&[&p], 0.1);
        adam.step(&mut [&mut p], &Grads(vec![vec![0.0; 3]])).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_unit_gradient_step_moves_by_lr() {
        let mut p = vec![0.5; 4];
        let mut adam = AdamState::with_betas(&[&p], 0.1, 0.9, 0.999, 1e-8);
        adam.step(&mut [&mut p], &Grads(vec![vec![1.0; 4]])).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + ε)
        let expected = 0.5 - 0.1 / (1.0 + 1e-8);
        for v in p {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn step_counter_increments_once_per_call() {
        let mut p = vec![0.0; 2];
        let mut adam = AdamState::new(&[&p], 0.01);
        for k in 1..=5 {
            adam.step(&mut [&mut p], &Grads(vec![vec![0.3, -0.1]])).unwrap();
            assert_eq!(adam.step_count(), k);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_update() {
        let mut p = vec![1.0, 1.0];
        let mut adam = AdamState::new(&[&p], 0.1);
        let err = adam.step(&mut [&mut p], &Grads(vec![vec![f64::NAN, 0.0]]));
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![1.0, 1.0];
        let mut adam = AdamState::new(&[&p], 0.1);
        assert!(adam.step(&mut [&mut p], &Grads(vec![vec![1.0]])).is_err());
    }
}
