//! Diffusion training on standardized features.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, DenoiserArch};
use super::schedule::{NoiseSchedule, ScheduleKind};
use crate::data::{BinSpec, LabeledFeatureSet, Standardizer, TargetNormalizer};
use crate::error::{Error, Result};
use crate::numeric::{AdamState, EmaShadow, Matrix, Mode, Parameterized, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// Predict `v_t = √ᾱ_t·ε − √(1−ᾱ_t)·z0`.
    V,
    /// Predict `ε` (ablation arm).
    Noise,
}

impl FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v" => Ok(Self::V),
            "noise" => Ok(Self::Noise),
            other => Err(Error::value(
                "diffusion.parameterization",
                format!("unknown parameterization `{other}` (expected v or noise)"),
            )),
        }
    }
}

impl fmt::Display for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::V => "v",
            Self::Noise => "noise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub parameterization: Parameterization,
    pub schedule: ScheduleKind,
    pub timesteps: usize,
    pub offset: f64,
    pub ema: bool,
    pub ema_decay: f64,
    /// Ramp the EMA decay as `min(γ, (1+k)/(10+k))` over the first updates.
    pub ema_warmup: bool,
    pub dropout: f64,
    pub hidden: usize,
    pub blocks: usize,
    pub embed_dim: usize,
    /// Clamp on `ẑ0` during sampling, in standardized units.
    pub clamp: f64,
    pub seed: u64,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 256,
            learning_rate: 1e-3,
            parameterization: Parameterization::V,
            schedule: ScheduleKind::Cosine,
            timesteps: 50,
            offset: 0.008,
            ema: true,
            ema_decay: 0.999,
            ema_warmup: true,
            dropout: 0.1,
            hidden: 256,
            blocks: 3,
            embed_dim: 64,
            clamp: 8.0,
            seed: 0,
        }
    }
}

impl DiffusionTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::value("diffusion.timesteps", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::value("diffusion.batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::value("diffusion.learning_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::value("diffusion.ema_decay", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::value("diffusion.dropout", "must lie in [0, 1)"));
        }
        if !(self.clamp > 0.0) {
            return Err(Error::value("diffusion.clamp", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.offset) {
            return Err(Error::value("diffusion.offset", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn arch(&self, feature_dim: usize) -> DenoiserArch {
        DenoiserArch {
            feature_dim,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            blocks: self.blocks,
            dropout: self.dropout,
        }
    }
}

/// A trained conditional feature generator and everything needed to sample
/// from it in the original feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub denoiser: Denoiser,
    pub ema: Option<EmaShadow>,
    pub schedule: NoiseSchedule,
    pub standardizer: Standardizer,
    pub normalizer: TargetNormalizer,
    pub parameterization: Parameterization,
    pub clamp: f64,
}

impl DiffusionModel {
    pub fn feature_dim(&self) -> usize {
        self.denoiser.arch.feature_dim
    }

    /// Denoiser carrying the EMA weights when requested and available.
    pub fn sampling_denoiser(&self, use_ema: bool) -> Result<Denoiser> {
        let mut d = self.denoiser.clone();
        if use_ema {
            if let Some(ema) = &self.ema {
                d.load_snapshot(&ema.shadow)?;
            }
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTrace {
    /// Mean per-element squared error of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Trains the denoiser on `set` (raw feature units; standardized internally).
/// Conditions are targets normalized with the bin range.
pub fn train_diffusion(
    set: &LabeledFeatureSet,
    bins: &BinSpec,
    config: &DiffusionTrainConfig,
) -> Result<(DiffusionModel, DiffusionTrace)> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::shape("cannot train a diffusion model on an empty set"));
    }
    let standardizer = if set.len() >= 2 {
        Standardizer::fit(&set.features)?
    } else {
        // a single point has no spread; centre it only
        Standardizer {
            mean: set.features.row(0).to_vec(),
            std: vec![1.0; set.width()],
            constant: vec![true; set.width()],
        }
    };
    let z0_all = standardizer.transform(&set.features)?;
    let normalizer = TargetNormalizer::new(bins.y_min, bins.y_max)?;
    let y_all: Vec<f64> = set.targets.iter().map(|&y| normalizer.normalize(y)).collect();
    let schedule = NoiseSchedule::new(config.schedule, config.timesteps, config.offset)?;

    let mut init_rng = SeededRng::substream(config.seed, "diffusion-init", 0);
    let mut denoiser = Denoiser::new(config.arch(set.width()), &mut init_rng)?;
    let mut adam = AdamState::new(&denoiser.params(), config.learning_rate);
    let mut ema = if config.ema {
        Some(EmaShadow::new(&denoiser.params(), config.ema_decay)?)
    } else {
        None
    };

    let mut rng = SeededRng::substream(config.seed, "diffusion-train", 0);
    let n = set.len();
    let batch = config.batch_size.min(n);
    let m = set.width();
    let mut trace = DiffusionTrace::default();

    for epoch in 0..config.epochs {
        let order = rng.permutation(n);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let b = chunk.len();
            let z0 = z0_all.select_rows(chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| y_all[i]).collect();
            let t: Vec<usize> = (0..b).map(|_| 1 + rng.below(schedule.steps)).collect();
            let eps = rng.normal_matrix(b, m);
            let mut zt = Matrix::zeros(b, m);
            let mut target = Matrix::zeros(b, m);
            for i in 0..b {
                let (a, s) = schedule.signal_noise(t[i]);
                let (z0r, er) = (z0.row(i), eps.row(i));
                for j in 0..m {
                    zt[(i, j)] = a * z0r[j] + s * er[j];
                    target[(i, j)] = match config.parameterization {
                        Parameterization::V => a * er[j] - s * z0r[j],
                        Parameterization::Noise => er[j],
                    };
                }
            }
            let (out, cache) = denoiser.forward(&zt, &y, &t, Mode::Train, &mut rng)?;
            let count = (b * m) as f64;
            let mut grad = out;
            let mut loss = 0.0;
            for (g, tv) in grad.as_mut_slice().iter_mut().zip(target.as_slice()) {
                let d = *g - tv;
                loss += d * d;
                *g = 2.0 * d / count;
            }
            loss /= count;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: trace.steps as usize,
                    reason: format!("diffusion loss {loss} in epoch {epoch}"),
                });
            }
            let grads = denoiser.backward(&cache, &grad)?;
            adam.step(&mut denoiser.params_mut(), &grads)
                .map_err(|e| Error::Diverged {
                    step: trace.steps as usize,
                    reason: e.to_string(),
                })?;
            if let Some(ema) = ema.as_mut() {
                let decay = if config.ema_warmup {
                    ema.warmup_decay()
                } else {
                    ema.decay
                };
                ema.update_with_decay(&denoiser.params(), decay)?;
            }
            trace.steps += 1;
            total += loss;
            batches += 1;
        }
        let mean = total / batches.max(1) as f64;
        log::debug!("diffusion epoch {epoch}: loss {mean:.5}");
        trace.epoch_losses.push(mean);
    }

    Ok((
        DiffusionModel {
            denoiser,
            ema,
            schedule,
            standardizer,
            normalizer,
            parameterization: config.parameterization,
            clamp: config.clamp,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> DiffusionTrainConfig {
        DiffusionTrainConfig {
            epochs: 5,
            batch_size: 32,
            hidden: 32,
            blocks: 1,
            embed_dim: 8,
            ..Default::default()
        }
    }

    fn toy_set(n: usize) -> LabeledFeatureSet {
        let mut rng = SeededRng::new(5, 0);
        let targets: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.2 } else { 0.8 }).collect();
        let mut f = rng.normal_matrix(n, 3);
        for (i, t) in targets.iter().enumerate() {
            f.row_mut(i).iter_mut().for_each(|v| *v += t);
        }
        LabeledFeatureSet::new(f, targets).unwrap()
    }

    #[test]
    fn loss_trace_is_finite_and_reproducible() {
        let set = toy_set(64);
        let bins = BinSpec::new(0.0, 1.0, 2).unwrap();
        let (m1, t1) = train_diffusion(&set, &bins, &tiny_config()).unwrap();
        let (m2, t2) = train_diffusion(&set, &bins, &tiny_config()).unwrap();
        assert_eq!(t1.epoch_losses.len(), 5);
        assert!(t1.epoch_losses.iter().all(|l| l.is_finite()));
        assert_eq!(t1, t2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn single_point_loss_collapses() {
        let f = Matrix::from_rows(&[[1.0, -0.5, 2.0]]).unwrap();
        let set = LabeledFeatureSet::new(f, vec![0.5]).unwrap();
        let bins = BinSpec::new(0.0, 1.0, 2).unwrap();
        let cfg = DiffusionTrainConfig {
            epochs: 10_000,
            batch_size: 1,
            dropout: 0.0,
            hidden: 64,
            learning_rate: 3e-3,
            ..tiny_config()
        };
        let (_, trace) = train_diffusion(&set, &bins, &cfg).unwrap();
        let head: f64 = trace.epoch_losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = trace.epoch_losses[cfg.epochs - 100..].iter().sum::<f64>() / 100.0;
        assert!(tail < 0.1 * head, "head {head} tail {tail}");
    }

    #[test]
    fn ema_off_leaves_no_shadow() {
        let set = toy_set(16);
        let bins = BinSpec::new(0.0, 1.0, 2).unwrap();
        let cfg = DiffusionTrainConfig {
            ema: false,
            epochs: 1,
            ..tiny_config()
        };
        let (m, _) = train_diffusion(&set, &bins, &cfg).unwrap();
        assert!(m.ema.is_none());
        assert_eq!(m.sampling_denoiser(true).unwrap(), m.denoiser);
    }

    #[test]
    fn zero_decay_shadow_equals_weights_after_one_update() {
        let set = toy_set(16);
        let bins = BinSpec::new(0.0, 1.0, 2).unwrap();
        let cfg = DiffusionTrainConfig {
            ema_decay: 0.0,
            ema_warmup: false,
            epochs: 1,
            batch_size: 16,
            ..tiny_config()
        };
        let (m, _) = train_diffusion(&set, &bins, &cfg).unwrap();
        assert_eq!(m.sampling_denoiser(true).unwrap(), m.sampling_denoiser(false).unwrap());
    }

    #[test]
    fn parameterization_parsing() {
        assert_eq!("v".parse::<Parameterization>().unwrap(), Parameterization::V);
        assert!("x0".parse::<Parameterization>().is_err());
    }
}
