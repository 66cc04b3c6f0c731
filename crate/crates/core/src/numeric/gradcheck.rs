//! Central-difference gradient oracle.
//!
//! Independent of backpropagation: it only ever calls the loss, never the
//! analytic gradient path it is checking.

use super::matrix::Matrix;
use super::net::{DenseNet, Grads, Mode, Parameterized};
use super::rng::SeededRng;
use crate::error::{Error, Result};

/// Scalar loss over a network output with its gradient.
pub trait LossFn {
    fn loss_and_grad(&self, output: &Matrix) -> (f64, Matrix);
}

/// `½‖y‖²` summed over the batch.
pub struct HalfSquaredNorm;

impl LossFn for HalfSquaredNorm {
    fn loss_and_grad(&self, output: &Matrix) -> (f64, Matrix) {
        let loss = 0.5 * output.as_slice().iter().map(|v| v * v).sum::<f64>();
        (loss, output.clone())
    }
}

/// Mean of squared differences over every element.
pub struct MseLoss {
    pub target: Matrix,
}

impl LossFn for MseLoss {
    fn loss_and_grad(&self, output: &Matrix) -> (f64, Matrix) {
        let n = output.as_slice().len().max(1) as f64;
        let mut grad = output.clone();
        let mut loss = 0.0;
        for (g, t) in grad.as_mut_slice().iter_mut().zip(self.target.as_slice()) {
            let d = *g - t;
            loss += d * d;
            *g = 2.0 * d / n;
        }
        (loss / n, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// max over parameters of `|analytic − numeric| / max(1, |analytic|)`
    pub max_rel_error: f64,
    pub worst_tensor: usize,
    pub worst_index: usize,
    pub checked: usize,
    pub passed: bool,
}

/// Checks every parameter of `model` against central differences of `loss`.
/// `loss` must be a pure function of the parameters (reseed any dropout).
pub fn check_parameters<M, F>(model: &mut M, h: f64, tol: f64, loss: F) -> Result<GradCheckReport>
where
    M: Parameterized,
    F: Fn(&M) -> Result<(f64, Grads)>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (_, analytic) = loss(model)?;
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    if analytic.len() != shapes.len() || analytic.0.iter().zip(&shapes).any(|(g, &n)| g.len() != n) {
        return Err(Error::shape("analytic gradients do not match parameter shapes"));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: 0,
        worst_index: 0,
        checked: 0,
        passed: true,
    };
    for (ti, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let original = model.params()[ti][i];
            model.params_mut()[ti][i] = original + h;
            let (plus, _) = loss(model)?;
            model.params_mut()[ti][i] = original - h;
            let (minus, _) = loss(model)?;
            model.params_mut()[ti][i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.0[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_tensor = ti;
                report.worst_index = i;
            }
            report.checked += 1;
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}

/// Gradient check of a [`DenseNet`] under a loss on its output. In training
/// mode the dropout masks are frozen by reseeding `seed` on every evaluation.
pub fn gradient_check(
    net: &DenseNet,
    loss_fn: &dyn LossFn,
    input: &Matrix,
    h: f64,
    tol: f64,
    mode: Mode,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut net = net.clone();
    check_parameters(&mut net, h, tol, |n| {
        let mut rng = SeededRng::new(seed, 0);
        let (out, cache) = n.forward(input, mode, &mut rng)?;
        let (loss, g) = loss_fn.loss_and_grad(&out);
        let (_, grads) = n.backward(&cache, &g)?;
        Ok((loss, grads))
    })
}
