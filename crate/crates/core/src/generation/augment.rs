//! Quota-driven conditional generation with quality gating.

use serde::{Deserialize, Serialize};

use super::gate::{fit_gate, gate_filter, GateConfig, QualityGate};
use super::priority::AllocationPlan;
use crate::data::{BinSpec, LabeledFeatureSet};
use crate::diffusion::{sample_with, DiffusionModel};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// A bin stops after `factor × quota` candidates.
    pub max_attempts_factor: usize,
    /// Upper bound on candidates drawn per reverse-sampling call.
    pub sample_batch: usize,
    pub use_ema: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            max_attempts_factor: 10,
            sample_batch: 512,
            use_ema: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub quotas: Vec<usize>,
    pub achieved: Vec<usize>,
    pub attempts: Vec<usize>,
    pub rejected: Vec<usize>,
    /// Candidates accepted without a check because their bin is ungated.
    pub ungated: Vec<usize>,
    pub shortfall: Vec<usize>,
    pub total_quota: usize,
    pub total_achieved: usize,
}

impl GenerationReport {
    pub fn acceptance_rate(&self, bin: usize) -> Option<f64> {
        (self.attempts[bin] > 0).then(|| (self.attempts[bin] - self.rejected[bin]) as f64 / self.attempts[bin] as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Augmentation {
    /// Synthetic rows in raw feature units, labelled with bin centers.
    pub set: LabeledFeatureSet,
    pub report: GenerationReport,
}

/// Fits the gate on real features mapped into the model's standardized space.
pub fn fit_gate_for_model(
    model: &DiffusionModel,
    real: &LabeledFeatureSet,
    bins: &BinSpec,
    config: &GateConfig,
) -> Result<QualityGate> {
    let z = model.standardizer.transform(&real.features)?;
    fit_gate(&z, &real.targets, bins, config)
}

/// Draws each bin's quota at its center condition, filtering through `gate`
/// when given. Every bin samples from its own stream derived from `seed`
/// and the bin id, so the result does not depend on processing order.
pub fn generate_augmentation(
    model: &DiffusionModel,
    bins: &BinSpec,
    plan: &AllocationPlan,
    gate: Option<&QualityGate>,
    config: &GenerateConfig,
    seed: u64,
) -> Result<Augmentation> {
    if plan.quotas.len() != bins.bins {
        return Err(Error::shape(format!(
            "plan covers {} bins, bin spec has {}",
            plan.quotas.len(),
            bins.bins
        )));
    }
    if let Some(g) = gate {
        if g.bins.len() != bins.bins || g.dim != model.feature_dim() {
            return Err(Error::shape(
                "quality gate does not match the bin spec or feature width",
            ));
        }
    }
    if config.max_attempts_factor == 0 || config.sample_batch == 0 {
        return Err(Error::value(
            "generate",
            "max_attempts_factor and sample_batch must be positive",
        ));
    }
    let m = model.feature_dim();
    let net = model.sampling_denoiser(config.use_ema)?;
    let k = bins.bins;
    let mut report = GenerationReport {
        quotas: plan.quotas.clone(),
        achieved: vec![0; k],
        attempts: vec![0; k],
        rejected: vec![0; k],
        ungated: vec![0; k],
        shortfall: vec![0; k],
        total_quota: plan.quotas.iter().sum(),
        total_achieved: 0,
    };
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();

    for bin in 0..k {
        let quota = plan.quotas[bin];
        if quota == 0 {
            continue;
        }
        let center = bins.center(bin);
        let budget = quota * config.max_attempts_factor;
        let mut rng = SeededRng::substream(seed, "generate", bin as u64);
        let mut kept = Matrix::zeros(0, m);
        while kept.rows() < quota && report.attempts[bin] < budget {
            let need = quota - kept.rows();
            let rate = report
                .acceptance_rate(bin)
                .unwrap_or(1.0)
                .max(1.0 / config.max_attempts_factor as f64);
            let draw = ((need as f64 / rate).ceil() as usize)
                .clamp(1, config.sample_batch)
                .min(budget - report.attempts[bin]);
            let cand = sample_with(model, &net, center, draw, &mut rng)?;
            report.attempts[bin] += draw;
            let accepted = match gate {
                Some(g) => {
                    let out = gate_filter(g, &cand, bin)?;
                    report.rejected[bin] += out.rejected;
                    report.ungated[bin] += out.ungated;
                    out.accepted
                }
                None => cand,
            };
            let take: Vec<usize> = (0..accepted.rows().min(need)).collect();
            kept = kept.vstack(&accepted.select_rows(&take))?;
        }
        report.achieved[bin] = kept.rows();
        report.shortfall[bin] = quota - kept.rows();
        if report.shortfall[bin] > 0 {
            log::warn!(
                "bin {bin}: generated {}/{quota} after {} candidates",
                kept.rows(),
                report.attempts[bin]
            );
        }
        rows.extend_from_slice(kept.as_slice());
        labels.extend(std::iter::repeat_n(center, kept.rows()));
    }
    report.total_achieved = labels.len();
    let z = Matrix::from_vec(labels.len(), m, rows)?;
    let features = if z.rows() == 0 {
        z
    } else {
        model.standardizer.inverse_transform(&z)?
    };
    let set = LabeledFeatureSet::new(features, labels)?.with_name("synthetic");
    Ok(Augmentation { set, report })
}
