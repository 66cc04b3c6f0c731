//! Encoder + linear head regressor.

use serde::{Deserialize, Serialize};

use crate::data::{LabeledFeatureSet, Standardizer};
use crate::error::{Error, Result};
use crate::numeric::{Activation, AdamState, DenseNet, Matrix, Mode, Parameterized, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    /// Encoder widths after the input; the last is the feature width.
    pub hidden: Vec<usize>,
    /// Use the inputs themselves as features.
    pub identity_encoder: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            identity_encoder: false,
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.identity_encoder && (self.hidden.is_empty() || self.hidden.contains(&0)) {
            return Err(Error::value("regressor.hidden", "needs at least one positive width"));
        }
        if self.batch_size == 0 {
            return Err(Error::value("regressor.batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::value("regressor.learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// `ŷ = μ_y + σ_y · h_φ(f_ψ(x))`. The encoder standardizes its inputs
/// first; in identity mode the features are the raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorModel {
    pub input_dim: usize,
    pub input_scaler: Option<Standardizer>,
    pub encoder: Option<DenseNet>,
    pub head: DenseNet,
    pub target_mean: f64,
    pub target_scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionTrace {
    /// Mean squared error per epoch, in standardized target units.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

pub(crate) fn linear_head(width: usize, rng: &mut SeededRng) -> Result<DenseNet> {
    DenseNet::mlp(&[width, 1], Activation::Identity, Activation::Identity, rng)
}

impl RegressorModel {
    pub fn feature_dim(&self) -> usize {
        self.head.input_dim()
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "model expects width {}, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        match (&self.encoder, &self.input_scaler) {
            (Some(enc), Some(s)) => enc.predict(&s.transform(x)?),
            (Some(enc), None) => enc.predict(x),
            (None, _) => Ok(x.clone()),
        }
    }

    pub fn predict_from_features(&self, z: &Matrix) -> Result<Vec<f64>> {
        let out = self.head.predict(z)?;
        Ok(out
            .as_slice()
            .iter()
            .map(|v| self.target_mean + self.target_scale * v)
            .collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.predict_from_features(&self.features(x)?)
    }

    pub(crate) fn scale_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.target_mean) / self.target_scale).collect()
    }
}

fn target_stats(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Squared-error gradient for one batch; returns the mean loss.
pub(crate) fn mse_grad(out: &Matrix, target: &[f64]) -> (f64, Matrix) {
    let n = target.len() as f64;
    let mut g = out.clone();
    let mut loss = 0.0;
    for (gv, &t) in g.as_mut_slice().iter_mut().zip(target) {
        let d = *gv - t;
        loss += d * d;
        *gv = 2.0 * d / n;
    }
    (loss / n, g)
}

/// Trains encoder and head jointly with MSE and Adam.
pub fn train_vanilla(
    set: &LabeledFeatureSet,
    config: &RegressorConfig,
    seed: u64,
) -> Result<(RegressorModel, RegressionTrace)> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::shape("cannot train on an empty set"));
    }
    let m = set.width();
    let mut init = SeededRng::substream(seed, "vanilla-init", 0);
    let (input_scaler, encoder, feat) = if config.identity_encoder {
        (None, None, m)
    } else {
        let scaler = if set.len() >= 2 {
            Standardizer::fit(&set.features)?
        } else {
            Standardizer::identity(m)
        };
        let mut dims = vec![m];
        dims.extend(&config.hidden);
        let enc = DenseNet::mlp(&dims, Activation::Relu, Activation::Relu, &mut init)?;
        (Some(scaler), Some(enc), *config.hidden.last().expect("validated"))
    };
    let (target_mean, target_scale) = target_stats(&set.targets);
    let mut model = RegressorModel {
        input_dim: m,
        input_scaler,
        encoder,
        head: linear_head(feat, &mut init)?,
        target_mean,
        target_scale,
    };
    let x_all = match &model.input_scaler {
        Some(s) => s.transform(&set.features)?,
        None => set.features.clone(),
    };
    let y_all = model.scale_targets(&set.targets);

    let mut adam = {
        let mut p: Vec<&[f64]> = model.encoder.as_ref().map(|e| e.params()).unwrap_or_default();
        p.extend(model.head.params());
        AdamState::new(&p, config.learning_rate)
    };
    let mut rng = SeededRng::substream(seed, "vanilla-train", 0);
    let mut trace = RegressionTrace::default();
    let batch = config.batch_size.min(set.len());
    for epoch in 0..config.epochs {
        let order = rng.permutation(set.len());
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(batch) {
            let x = x_all.select_rows(chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| y_all[i]).collect();
            let (z, enc_cache) = match &model.encoder {
                Some(enc) => {
                    let (z, c) = enc.forward(&x, Mode::Train, &mut rng)?;
                    (z, Some(c))
                }
                None => (x, None),
            };
            let (out, head_cache) = model.head.forward(&z, Mode::Train, &mut rng)?;
            let (loss, g) = mse_grad(&out, &y);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: trace.steps as usize,
                    reason: format!("regression loss {loss} in epoch {epoch}"),
                });
            }
            let (gz, head_grads) = model.head.backward(&head_cache, &g)?;
            let mut grads = match (&model.encoder, &enc_cache) {
                (Some(enc), Some(c)) => enc.backward(c, &gz)?.1,
                _ => crate::numeric::Grads(Vec::new()),
            };
            grads.extend(head_grads);
            let mut p: Vec<&mut [f64]> = model.encoder.as_mut().map(|e| e.params_mut()).unwrap_or_default();
            p.extend(model.head.params_mut());
            adam.step(&mut p, &grads).map_err(|e| Error::Diverged {
                step: trace.steps as usize,
                reason: e.to_string(),
            })?;
            trace.steps += 1;
            total += loss * chunk.len() as f64;
            count += chunk.len();
        }
        let mean = total / count as f64;
        log::debug!("vanilla epoch {epoch}: mse {mean:.6}");
        trace.epoch_losses.push(mean);
    }
    Ok((model, trace))
}

/// Eval-mode features `(f_ψ(x_i), y_i)` in row order.
pub fn extract_features(model: &RegressorModel, set: &LabeledFeatureSet) -> Result<LabeledFeatureSet> {
    let z = model.features(&set.features)?;
    Ok(LabeledFeatureSet::new(z, set.targets.clone())?
        .with_name(format!("{}-features", set.name.as_deref().unwrap_or("set"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_set(n: usize) -> LabeledFeatureSet {
        let mut rng = SeededRng::new(1, 0);
        let x = rng.normal_matrix(n, 3);
        let w = [1.5, -2.0, 0.5];
        let y = x
            .iter_rows()
            .map(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect();
        LabeledFeatureSet::new(x, y).unwrap()
    }

    #[test]
    fn identity_encoder_fits_linear_data() {
        let set = linear_set(200);
        let cfg = RegressorConfig {
            identity_encoder: true,
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let (model, trace) = train_vanilla(&set, &cfg, 0).unwrap();
        assert!(*trace.epoch_losses.last().unwrap() < 1e-4);
        let p = model.predict(&set.features).unwrap();
        let mse = p.iter().zip(&set.targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 200.0;
        assert!(mse < 1e-4, "{mse}");
        let f = extract_features(&model, &set).unwrap();
        assert_eq!(f.features, set.features);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let set = linear_set(64);
        let cfg = RegressorConfig {
            hidden: vec![16, 8],
            epochs: 3,
            batch_size: 16,
            ..Default::default()
        };
        let (a, _) = train_vanilla(&set, &cfg, 4).unwrap();
        let (b, _) = train_vanilla(&set, &cfg, 4).unwrap();
        assert_eq!(a, b);
        let fa = extract_features(&a, &set).unwrap();
        let fb = extract_features(&a, &set).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(fa.len(), 64);
        assert_eq!(fa.width(), 8);
    }

    #[test]
    fn constant_target_learns_the_mean() {
        let mut rng = SeededRng::new(2, 0);
        let set = LabeledFeatureSet::new(rng.normal_matrix(50, 2), vec![3.25; 50]).unwrap();
        let cfg = RegressorConfig {
            hidden: vec![8],
            epochs: 200,
            ..Default::default()
        };
        let (model, _) = train_vanilla(&set, &cfg, 0).unwrap();
        let p = model.predict(&set.features).unwrap();
        let mse = p.iter().map(|v| (v - 3.25).powi(2)).sum::<f64>() / p.len() as f64;
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!(mse < 1e-3 && (mean - 3.25).abs() < 1e-2, "mse {mse} mean {mean}");
    }

    #[test]
    fn width_mismatch() {
        let set = linear_set(20);
        let cfg = RegressorConfig {
            hidden: vec![4],
            epochs: 1,
            ..Default::default()
        };
        let (model, _) = train_vanilla(&set, &cfg, 0).unwrap();
        assert!(model.predict(&Matrix::zeros(2, 5)).is_err());
    }
}
