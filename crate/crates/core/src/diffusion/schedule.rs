//! Noise schedules.
//!
//! Tables are indexed by timestep `t = 0..=T`; index 0 holds `ᾱ_0 = 1` and
//! placeholder `β_0 = 0`, `α_0 = 1`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "linear" => Ok(Self::Linear),
            other => Err(Error::value(
                "diffusion.schedule",
                format!("unknown schedule kind `{other}` (expected cosine or linear)"),
            )),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub offset: f64,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

/// `cos²(((t/T + s)/(1 + s))·π/2)`
fn cosine_f(t: f64, steps: f64, s: f64) -> f64 {
    ((t / steps + s) / (1.0 + s) * FRAC_PI_2).cos().powi(2)
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize, offset: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::value("diffusion.timesteps", "T must be at least 1"));
        }
        if !(0.0..1.0).contains(&offset) {
            return Err(Error::value("diffusion.offset", format!("{offset} not in [0, 1)")));
        }
        let mut betas = vec![0.0; steps + 1];
        let mut alphas = vec![1.0; steps + 1];
        let mut alpha_bars = vec![1.0; steps + 1];
        match kind {
            ScheduleKind::Cosine => {
                let tf = steps as f64;
                let f0 = cosine_f(0.0, tf, offset);
                for t in 1..=steps {
                    alpha_bars[t] = cosine_f(t as f64, tf, offset) / f0;
                    alphas[t] = alpha_bars[t] / alpha_bars[t - 1];
                    // At t = T the ratio is ~1e-30 and 1 − α rounds to exactly 1.
                    betas[t] = (1.0 - alphas[t]).min(1.0 - f64::EPSILON);
                }
            }
            ScheduleKind::Linear => {
                for t in 1..=steps {
                    let frac = if steps == 1 {
                        0.0
                    } else {
                        (t - 1) as f64 / (steps - 1) as f64
                    };
                    betas[t] = LINEAR_BETA_START + frac * (LINEAR_BETA_END - LINEAR_BETA_START);
                    alphas[t] = 1.0 - betas[t];
                    alpha_bars[t] = alpha_bars[t - 1] * alphas[t];
                }
            }
        }
        Ok(Self {
            kind,
            steps,
            offset,
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn cosine(steps: usize) -> Self {
        Self::new(ScheduleKind::Cosine, steps, 0.008).expect("valid defaults")
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::Timestep { t, max: self.steps });
        }
        Ok(())
    }

    #[inline]
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// `(√ᾱ_t, √(1 − ᾱ_t))`
    #[inline]
    pub fn signal_noise(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bars[t];
        (ab.sqrt(), (1.0 - ab).max(0.0).sqrt())
    }

    /// Coefficients of the reverse-process posterior at step `t`:
    /// `(coef on ẑ0, coef on z_t, variance β̃_t)`.
    pub fn posterior(&self, t: usize) -> (f64, f64, f64) {
        let ab = self.alpha_bars[t];
        let ab_prev = self.alpha_bars[t - 1];
        let beta = self.betas[t];
        let denom = 1.0 - ab;
        let c0 = ab_prev.sqrt() * beta / denom;
        let ct = self.alphas[t].sqrt() * (1.0 - ab_prev) / denom;
        let var = (1.0 - ab_prev) / denom * beta;
        (c0, ct, var)
    }
}

pub fn build_schedule(kind: ScheduleKind, steps: usize, offset: f64) -> Result<NoiseSchedule> {
    NoiseSchedule::new(kind, steps, offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        let s = NoiseSchedule::cosine(50);
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(50) <= 1e-10);
    }

    #[test]
    fn cosine_midpoint_matches_closed_form() {
        let s = NoiseSchedule::cosine(50);
        // cos²((0.5 + 0.008)/1.008 · π/2) / cos²(0.008/1.008 · π/2), evaluated separately
        let num = ((0.508f64 / 1.008) * FRAC_PI_2).cos().powi(2);
        let den = ((0.008f64 / 1.008) * FRAC_PI_2).cos().powi(2);
        assert!((s.alpha_bar(25) - num / den).abs() < 1e-12);
        assert!((s.alpha_bar(25) - 0.493_843_590_440_637_8).abs() < 1e-9);
    }

    #[test]
    fn tables_satisfy_invariants() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            for steps in [1, 10, 50, 100] {
                let s = NoiseSchedule::new(kind, steps, 0.008).unwrap();
                assert_eq!(s.alpha_bar(0), 1.0);
                for t in 1..=steps {
                    assert!(s.alpha_bars[t] < s.alpha_bars[t - 1], "{kind} T={steps} t={t}");
                    assert!(s.betas[t] > 0.0 && s.betas[t] < 1.0);
                    assert!((s.alphas[t] - (1.0 - s.betas[t])).abs() < 1e-12 || t == steps);
                }
            }
        }
    }

    #[test]
    fn linear_betas_interpolate() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 50, 0.0).unwrap();
        assert_eq!(s.betas[1], 1e-4);
        assert!((s.betas[50] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn posterior_at_final_step_is_denoised_estimate() {
        let s = NoiseSchedule::cosine(50);
        let (c0, ct, _) = s.posterior(1);
        assert!((c0 - 1.0).abs() < 1e-12);
        assert_eq!(ct, 0.0);
    }

    #[test]
    fn posterior_variance_bounded_by_beta() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            let s = NoiseSchedule::new(kind, 50, 0.008).unwrap();
            for t in 2..=50 {
                let (_, _, var) = s.posterior(t);
                assert!(var > 0.0 && var <= s.betas[t], "t={t}");
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSchedule::new(ScheduleKind::Cosine, 0, 0.008).is_err());
        assert!(NoiseSchedule::new(ScheduleKind::Cosine, 10, 1.0).is_err());
        assert!("sigmoid".parse::<ScheduleKind>().is_err());
        assert_eq!("linear".parse::<ScheduleKind>().unwrap(), ScheduleKind::Linear);
    }
}
