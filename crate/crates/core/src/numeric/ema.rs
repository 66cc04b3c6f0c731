use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential moving average of parameter tensors.
///
/// After every update: `shadow = decay * shadow + (1 - decay) * param`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaShadow {
    pub decay: f64,
    pub shadow: Vec<Vec<f64>>,
    pub updates: u64,
}

impl EmaShadow {
    pub fn new(params: &[&[f64]], decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::value("diffusion.ema_decay", format!("{decay} not in [0, 1]")));
        }
        Ok(Self {
            decay,
            shadow: params.iter().map(|p| p.to_vec()).collect(),
            updates: 0,
        })
    }

    pub fn update(&mut self, params: &[&[f64]]) -> Result<()> {
        self.update_with_decay(params, self.decay)
    }

    /// Same recurrence with an explicit decay for this call (used by warmup).
    pub fn update_with_decay(&mut self, params: &[&[f64]], decay: f64) -> Result<()> {
        if params.len() != self.shadow.len() || params.iter().zip(&self.shadow).any(|(p, s)| p.len() != s.len()) {
            return Err(Error::shape("EMA shadow does not match parameter shapes"));
        }
        for (s, p) in self.shadow.iter_mut().zip(params) {
            for (sv, pv) in s.iter_mut().zip(p.iter()) {
                *sv = decay * *sv + (1.0 - decay) * pv;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Warmup-adjusted decay `min(decay, (1 + k) / (10 + k))` for the k-th update.
    pub fn warmup_decay(&self) -> f64 {
        let k = self.updates as f64 + 1.0;
        self.decay.min((1.0 + k) / (10.0 + k))
    }
}
