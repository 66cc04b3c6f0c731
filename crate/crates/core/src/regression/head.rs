//! Head retraining on frozen features mixed with synthetic rows.

use serde::{Deserialize, Serialize};

use super::model::{linear_head, mse_grad, RegressorModel};
use crate::data::LabeledFeatureSet;
use crate::error::{Error, Result};
use crate::numeric::{AdamState, Mode, Parameterized, SeededRng};

/// Synthetic share of every training batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSchedule {
    pub ratio: f64,
    /// Optional per-epoch ratios; epochs past the end reuse the last entry.
    pub per_epoch: Option<Vec<f64>>,
}

impl Default for MixSchedule {
    fn default() -> Self {
        Self {
            ratio: 0.2,
            per_epoch: None,
        }
    }
}

impl MixSchedule {
    pub fn constant(ratio: f64) -> Self {
        Self { ratio, per_epoch: None }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |r: f64| {
            if (0.0..1.0).contains(&r) {
                Ok(())
            } else {
                Err(Error::value("mix.ratio", format!("{r} is outside [0, 1)")))
            }
        };
        check(self.ratio)?;
        for &r in self.per_epoch.iter().flatten() {
            check(r)?;
        }
        Ok(())
    }

    pub fn ratio_at(&self, epoch: usize) -> f64 {
        match &self.per_epoch {
            Some(table) if !table.is_empty() => table[epoch.min(table.len() - 1)],
            _ => self.ratio,
        }
    }

    /// Synthetic rows per batch, `⌊batch·r⌉`, leaving at least one real row.
    pub fn synthetic_per_batch(&self, batch: usize, epoch: usize) -> usize {
        ((batch as f64 * self.ratio_at(epoch)).round() as usize).min(batch.saturating_sub(1))
    }

    /// Synthetic rows one epoch consumes when `real` rows are batched with
    /// this schedule at the base ratio.
    pub fn epoch_demand(&self, real: usize, batch: usize) -> usize {
        let s = self.synthetic_per_batch(batch, 0);
        if s == 0 || real == 0 {
            return 0;
        }
        real.div_ceil(batch - s) * s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Start from the vanilla head instead of a fresh initialization.
    pub continue_from_vanilla: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            continue_from_vanilla: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadTrace {
    pub epoch_losses: Vec<f64>,
    pub real_rows: Vec<usize>,
    pub synthetic_rows: Vec<usize>,
    /// Epochs in which the synthetic set was too small and rows were reused.
    pub resampled_epochs: usize,
    pub steps: u64,
}

/// Retrains the head of `base` on real features plus synthetic features,
/// keeping the encoder frozen. Each batch holds `⌊B·r⌉` synthetic rows.
/// Real and synthetic orderings come from separate streams so an empty mix
/// replays plain head retraining exactly.
pub fn train_head_augmented(
    base: &RegressorModel,
    real: &LabeledFeatureSet,
    synthetic: &LabeledFeatureSet,
    mix: &MixSchedule,
    config: &HeadConfig,
    seed: u64,
) -> Result<(RegressorModel, HeadTrace)> {
    mix.validate()?;
    if config.batch_size == 0 {
        return Err(Error::value("head.batch_size", "must be positive"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::value("head.learning_rate", "must be positive"));
    }
    let m = base.feature_dim();
    if real.width() != m || (!synthetic.is_empty() && synthetic.width() != m) {
        return Err(Error::shape(format!(
            "head expects width {m}, got real {} and synthetic {}",
            real.width(),
            synthetic.width()
        )));
    }
    if real.is_empty() {
        return Err(Error::shape("head retraining needs real rows"));
    }
    let mut model = base.clone();
    if !config.continue_from_vanilla {
        let mut init = SeededRng::substream(seed, "head-init", 0);
        model.head = linear_head(m, &mut init)?;
    }
    let y_real = model.scale_targets(&real.targets);
    let y_syn = model.scale_targets(&synthetic.targets);
    let mut adam = AdamState::new(&model.head.params(), config.learning_rate);
    let mut real_rng = SeededRng::substream(seed, "head-train", 0);
    let mut syn_rng = SeededRng::substream(seed, "head-synthetic", 0);
    let mut trace = HeadTrace::default();
    let n_syn = synthetic.len();

    for epoch in 0..config.epochs {
        let b = config.batch_size.min(real.len() + n_syn);
        let s = if n_syn == 0 {
            0
        } else {
            mix.synthetic_per_batch(b, epoch)
        };
        let per_real = b - s;
        let order = real_rng.permutation(real.len());
        let batches = real.len().div_ceil(per_real);
        let demand = batches * s;
        let mut syn_order: Vec<usize> = Vec::new();
        if s > 0 {
            syn_order = syn_rng.permutation(n_syn);
            if demand > n_syn {
                syn_order.extend((0..demand - n_syn).map(|_| syn_rng.below(n_syn)));
                trace.resampled_epochs += 1;
                if trace.resampled_epochs == 1 {
                    log::info!(
                        "synthetic set has {n_syn} rows for a per-epoch demand of {demand}; sampling with replacement"
                    );
                }
            }
            syn_order.truncate(demand);
        }
        let mut total = 0.0;
        let mut rows = 0usize;
        for (k, chunk) in order.chunks(per_real).enumerate() {
            let mut z = real.features.select_rows(chunk);
            let mut y: Vec<f64> = chunk.iter().map(|&i| y_real[i]).collect();
            if s > 0 {
                let pick = &syn_order[k * s..(k + 1) * s];
                z = z.vstack(&synthetic.features.select_rows(pick))?;
                y.extend(pick.iter().map(|&i| y_syn[i]));
            }
            let (out, cache) = model.head.forward(&z, Mode::Train, &mut real_rng)?;
            let (loss, g) = mse_grad(&out, &y);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: trace.steps as usize,
                    reason: format!("head loss {loss} in epoch {epoch}"),
                });
            }
            let (_, grads) = model.head.backward(&cache, &g)?;
            adam.step(&mut model.head.params_mut(), &grads)
                .map_err(|e| Error::Diverged {
                    step: trace.steps as usize,
                    reason: e.to_string(),
                })?;
            trace.steps += 1;
            total += loss * y.len() as f64;
            rows += y.len();
        }
        trace.epoch_losses.push(total / rows as f64);
        trace.real_rows.push(real.len());
        trace.synthetic_rows.push(demand);
    }
    Ok((model, trace))
}

/// Retrains the head on real features only.
pub fn retrain_head(
    base: &RegressorModel,
    real: &LabeledFeatureSet,
    config: &HeadConfig,
    seed: u64,
) -> Result<(RegressorModel, HeadTrace)> {
    let empty = LabeledFeatureSet::empty(real.width());
    train_head_augmented(base, real, &empty, &MixSchedule::constant(0.0), config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Matrix;
    use crate::regression::model::{extract_features, train_vanilla, RegressorConfig};

    fn setup() -> (RegressorModel, LabeledFeatureSet) {
        let mut rng = SeededRng::new(3, 0);
        let x = rng.normal_matrix(100, 3);
        let y: Vec<f64> = x.iter_rows().map(|r| r[0] - r[1]).collect();
        let set = LabeledFeatureSet::new(x, y).unwrap();
        let cfg = RegressorConfig {
            hidden: vec![8, 4],
            epochs: 5,
            batch_size: 16,
            ..Default::default()
        };
        let (model, _) = train_vanilla(&set, &cfg, 0).unwrap();
        let feats = extract_features(&model, &set).unwrap();
        (model, feats)
    }

    fn head_cfg() -> HeadConfig {
        HeadConfig {
            epochs: 4,
            batch_size: 50,
            ..Default::default()
        }
    }

    #[test]
    fn zero_ratio_matches_real_only_retraining() {
        let (model, feats) = setup();
        let syn = feats.select(&[0, 1, 2]);
        let a = train_head_augmented(&model, &feats, &syn, &MixSchedule::constant(0.0), &head_cfg(), 9).unwrap();
        let b = retrain_head(&model, &feats, &head_cfg(), 9).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.epoch_losses, b.1.epoch_losses);
        // empty synthetic set at a positive ratio is the same run too
        let empty = LabeledFeatureSet::empty(feats.width());
        let c = train_head_augmented(&model, &feats, &empty, &MixSchedule::default(), &head_cfg(), 9).unwrap();
        assert_eq!(c.0, b.0);
    }

    #[test]
    fn twenty_percent_of_fifty_is_ten() {
        let mix = MixSchedule::default();
        assert_eq!(mix.synthetic_per_batch(50, 0), 10);
        assert_eq!(mix.epoch_demand(100, 50), 30);
    }

    #[test]
    fn small_synthetic_sets_are_resampled() {
        let (model, feats) = setup();
        let syn = feats.select(&[0, 1, 2]);
        let (_, trace) = train_head_augmented(&model, &feats, &syn, &MixSchedule::default(), &head_cfg(), 1).unwrap();
        assert_eq!(trace.resampled_epochs, 4);
        assert_eq!(trace.synthetic_rows[0], 30);
    }

    #[test]
    fn rows_per_epoch_are_real_plus_demand() {
        let (model, feats) = setup();
        let mix = MixSchedule::default();
        let syn = feats.select(&(0..mix.epoch_demand(100, 50)).collect::<Vec<_>>());
        let (_, trace) = train_head_augmented(&model, &feats, &syn, &mix, &head_cfg(), 1).unwrap();
        assert_eq!(trace.resampled_epochs, 0);
        assert_eq!(trace.real_rows[0] + trace.synthetic_rows[0], 100 + syn.len());
    }

    #[test]
    fn rejects_full_synthetic_ratio_and_width_mismatch() {
        let (model, feats) = setup();
        assert!(train_head_augmented(&model, &feats, &feats, &MixSchedule::constant(1.0), &head_cfg(), 0).is_err());
        let wide = LabeledFeatureSet::new(Matrix::zeros(2, 7), vec![0.0, 0.0]).unwrap();
        assert!(train_head_augmented(&model, &feats, &wide, &MixSchedule::default(), &head_cfg(), 0).is_err());
    }

    #[test]
    fn inference_uses_only_encoder_and_head() {
        let (model, feats) = setup();
        let (aug, _) = retrain_head(&model, &feats, &head_cfg(), 0).unwrap();
        assert_eq!(aug.encoder, model.encoder);
        assert_eq!(aug.input_scaler, model.input_scaler);
    }
}
