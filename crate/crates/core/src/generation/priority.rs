//! Per-bin error tracking, priority scores and budget allocation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::BinSpec;
use crate::error::{Error, Result};

/// Mean absolute error and sample count per target bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinErrors {
    /// `ē_y`; zero for unoccupied bins.
    pub mean_abs_error: Vec<f64>,
    pub counts: Vec<usize>,
}

impl BinErrors {
    pub fn occupied(&self, bin: usize) -> bool {
        self.counts[bin] > 0
    }
}

pub fn track_errors(predictions: &[f64], targets: &[f64], bins: &BinSpec) -> Result<BinErrors> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut sums = vec![0.0; bins.bins];
    let mut counts = vec![0usize; bins.bins];
    for (&p, &y) in predictions.iter().zip(targets) {
        let b = bins.bin_index(y)?;
        sums[b] += (p - y).abs();
        counts[b] += 1;
    }
    let mean_abs_error = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(BinErrors { mean_abs_error, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityState {
    pub errors: Vec<f64>,
    pub counts: Vec<usize>,
    pub lambda: f64,
    /// Unnormalized `P'(y)`.
    pub raw: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Set when every `P'` was zero and `P` fell back to uniform.
    pub uniform_fallback: bool,
}

/// `P'(y) = λ·ē_y + (1−λ)·(1 − n_y/max n)`, normalized to sum to one.
///
/// Empty bins count as maximally scarce and borrow the mean error of the
/// occupied bins. With `normalize_errors` the errors are first divided by
/// their maximum.
pub fn priority_scores(errors: &[f64], counts: &[usize], lambda: f64, normalize_errors: bool) -> Result<PriorityState> {
    if errors.len() != counts.len() {
        return Err(Error::shape(format!(
            "{} bin errors for {} bin counts",
            errors.len(),
            counts.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::value("priority.lambda", format!("{lambda} is outside [0, 1]")));
    }
    let max_n = counts.iter().copied().max().unwrap_or(0);
    if max_n == 0 {
        return Err(Error::config("priority scores need at least one occupied bin"));
    }
    if let Some(e) = errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::NonFinite(format!("bin error {e}")));
    }
    let occupied: Vec<f64> = errors
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&e, _)| e)
        .collect();
    let fill = occupied.iter().sum::<f64>() / occupied.len() as f64;
    let mut e: Vec<f64> = errors
        .iter()
        .zip(counts)
        .map(|(&e, &c)| if c > 0 { e } else { fill })
        .collect();
    if normalize_errors {
        let top = e.iter().copied().fold(0.0, f64::max);
        if top > 0.0 {
            e.iter_mut().for_each(|v| *v /= top);
        }
    }
    let raw: Vec<f64> = e
        .iter()
        .zip(counts)
        .map(|(&ek, &nk)| lambda * ek + (1.0 - lambda) * (1.0 - nk as f64 / max_n as f64))
        .collect();
    let total: f64 = raw.iter().sum();
    let k = raw.len() as f64;
    let (probabilities, uniform_fallback) = if total > 0.0 {
        (raw.iter().map(|v| v / total).collect(), false)
    } else {
        (vec![1.0 / k; raw.len()], true)
    };
    Ok(PriorityState {
        errors: e,
        counts: counts.to_vec(),
        lambda,
        raw,
        probabilities,
        uniform_fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    Priority,
    Uniform,
}

impl FromStr for AllocationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "priority" => Ok(Self::Priority),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::value(
                "priority.mode",
                format!("unknown allocation mode `{other}` (expected priority or uniform)"),
            )),
        }
    }
}

impl fmt::Display for AllocationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Priority => "priority",
            Self::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub quotas: Vec<usize>,
    pub total: usize,
    pub mode: AllocationMode,
}

/// Integer quotas summing to `total`. Priority mode rounds `total·P` by
/// largest remainder (ties to the lower bin); uniform mode spreads the
/// budget as evenly as integer division allows, extras to the lower bins.
pub fn allocate_budget(probabilities: &[f64], total: usize, mode: AllocationMode) -> Result<AllocationPlan> {
    let k = probabilities.len();
    if k == 0 {
        return Err(Error::config("cannot allocate over zero bins"));
    }
    let quotas = match mode {
        AllocationMode::Uniform => (0..k).map(|i| total / k + usize::from(i < total % k)).collect(),
        AllocationMode::Priority => {
            if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::NonFinite("allocation probabilities".into()));
            }
            let sum: f64 = probabilities.iter().sum();
            if !(sum > 0.0) {
                return Err(Error::config("allocation probabilities sum to zero"));
            }
            let exact: Vec<f64> = probabilities.iter().map(|p| p / sum * total as f64).collect();
            let mut quotas: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
            let assigned: usize = quotas.iter().sum();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                let ra = exact[a] - exact[a].floor();
                let rb = exact[b] - exact[b].floor();
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            for &i in order.iter().take(total.saturating_sub(assigned)) {
                quotas[i] += 1;
            }
            quotas
        }
    };
    Ok(AllocationPlan { quotas, total, mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bins() -> BinSpec {
        BinSpec::new(0.0, 10.0, 2).unwrap()
    }

    #[test]
    fn perfect_predictions_have_zero_error() {
        let y = [1.0, 2.0, 7.0];
        let e = track_errors(&y, &y, &bins()).unwrap();
        assert_eq!(e.mean_abs_error, vec![0.0, 0.0]);
        assert_eq!(e.counts, vec![2, 1]);
    }

    #[test]
    fn bin_error_is_mean_absolute() {
        let e = track_errors(&[2.0, 1.0, 9.0], &[1.0, 4.0, 9.0], &bins()).unwrap();
        assert_eq!(e.mean_abs_error[0], 2.0);
        assert!(!BinErrors {
            mean_abs_error: vec![0.0; 2],
            counts: vec![1, 0]
        }
        .occupied(1));
    }

    #[test]
    fn length_mismatch() {
        assert!(track_errors(&[1.0], &[1.0, 2.0], &bins()).is_err());
    }

    #[test]
    fn hand_example() {
        let p = priority_scores(&[2.0, 1.0], &[10, 100], 0.7, false).unwrap();
        assert!((p.raw[0] - 1.67).abs() < 1e-12);
        assert!((p.raw[1] - 0.70).abs() < 1e-12);
        assert!((p.probabilities[0] - 1.67 / 2.37).abs() < 1e-12);
        assert!((p.probabilities[0] - 0.7046).abs() < 1e-4);
        assert!((p.probabilities[1] - 0.2954).abs() < 1e-4);
        let plan = allocate_budget(&p.probabilities, 100, AllocationMode::Priority).unwrap();
        assert_eq!(plan.quotas, vec![70, 30]);
    }

    #[test]
    fn zero_scores_fall_back_to_uniform() {
        let p = priority_scores(&[0.0, 0.0, 0.0], &[5, 5, 5], 0.0, false).unwrap();
        assert!(p.uniform_fallback);
        assert_eq!(p.probabilities, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn pure_error_mix_is_proportional_to_error() {
        let p = priority_scores(&[1.0, 3.0], &[4, 9], 1.0, false).unwrap();
        assert!((p.probabilities[0] - 0.25).abs() < 1e-15);
        assert!((p.probabilities[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn empty_bins_are_scarce_and_borrow_mean_error() {
        let p = priority_scores(&[2.0, 99.0, 4.0], &[10, 0, 5], 0.5, false).unwrap();
        assert_eq!(p.errors[1], 3.0);
        assert!((p.raw[1] - (0.5 * 3.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn normalized_errors_are_unit_scale() {
        let p = priority_scores(&[10.0, 5.0], &[1, 1], 1.0, true).unwrap();
        assert_eq!(p.errors, vec![1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(priority_scores(&[1.0], &[0], 0.5, false).is_err());
        assert!(matches!(
            priority_scores(&[1.0], &[1], 1.5, false),
            Err(Error::ConfigValue { ref key, .. }) if key == "priority.lambda"
        ));
        assert!(priority_scores(&[1.0, 1.0], &[1], 0.5, false).is_err());
    }

    #[test]
    fn zero_budget_is_all_zero() {
        let plan = allocate_budget(&[0.5, 0.5], 0, AllocationMode::Priority).unwrap();
        assert_eq!(plan.quotas, vec![0, 0]);
    }

    #[test]
    fn uniform_spread() {
        let plan = allocate_budget(&[0.9, 0.05, 0.05], 10, AllocationMode::Uniform).unwrap();
        assert_eq!(plan.quotas.iter().sum::<usize>(), 10);
        let (lo, hi) = (plan.quotas.iter().min().unwrap(), plan.quotas.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    proptest! {
        #[test]
        fn plans_sum_to_budget(
            p in proptest::collection::vec(0.0f64..1.0, 1..30),
            n in 0usize..5000,
            uniform in any::<bool>(),
        ) {
            prop_assume!(p.iter().sum::<f64>() > 1e-9);
            let mode = if uniform { AllocationMode::Uniform } else { AllocationMode::Priority };
            let plan = allocate_budget(&p, n, mode).unwrap();
            prop_assert_eq!(plan.quotas.iter().sum::<usize>(), n);
        }

        #[test]
        fn probabilities_are_a_distribution(
            e in proptest::collection::vec(0.0f64..50.0, 1..30),
            seed in proptest::collection::vec(0usize..500, 30),
            lambda in 0.0f64..=1.0,
        ) {
            let n: Vec<usize> = seed[..e.len()].to_vec();
            prop_assume!(n.iter().any(|&c| c > 0));
            let p = priority_scores(&e, &n, lambda, false).unwrap();
            prop_assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.probabilities.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn scaling_errors_keeps_ranking(
            e in proptest::collection::vec(0.01f64..50.0, 2..20),
            c in 0.1f64..100.0,
        ) {
            let n = vec![3usize; e.len()];
            let a = priority_scores(&e, &n, 1.0, false).unwrap().probabilities;
            let scaled: Vec<f64> = e.iter().map(|v| v * c).collect();
            let b = priority_scores(&scaled, &n, 1.0, false).unwrap().probabilities;
            for i in 0..e.len() {
                for j in 0..e.len() {
                    if a[i] > a[j] + 1e-12 {
                        prop_assert!(b[i] >= b[j]);
                    }
                }
            }
        }

        #[test]
        fn errors_are_permutation_invariant(perm_seed in 0u64..1000) {
            let mut rng = crate::numeric::SeededRng::new(perm_seed, 0);
            let b = BinSpec::new(0.0, 1.0, 4).unwrap();
            let y: Vec<f64> = (0..40).map(|_| rng.uniform()).collect();
            let p: Vec<f64> = y.iter().map(|v| v + rng.normal() * 0.1).collect();
            let idx = rng.permutation(40);
            let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let a = track_errors(&p, &y, &b).unwrap();
            let c = track_errors(&pp, &yp, &b).unwrap();
            prop_assert_eq!(&a.counts, &c.counts);
            for (x, z) in a.mean_abs_error.iter().zip(&c.mean_abs_error) {
                prop_assert!((x - z).abs() < 1e-12);
            }
        }
    }
}
