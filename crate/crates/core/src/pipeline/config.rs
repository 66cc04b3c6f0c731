//! The single JSON document that governs every stage.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analytics::AnalyticsConfig;
use crate::data::SyntheticConfig;
use crate::diffusion::DiffusionTrainConfig;
use crate::error::{Error, Result};
use crate::generation::{AllocationMode, GateConfig, GenerateConfig};
use crate::regression::{HeadConfig, MixSchedule, RegressorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Csv,
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "csv" => Ok(Self::Csv),
            other => Err(Error::value(
                "data.source",
                format!("unknown source `{other}` (expected synthetic or csv)"),
            )),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Synthetic => "synthetic",
            Self::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Synthetic benchmark: training rows, feature width, tail decay, noise σ.
    pub n: usize,
    pub m: usize,
    pub decay: f64,
    pub noise: f64,
    /// Rows in the balanced synthetic test set.
    pub test_n: usize,
    /// Number of equal-width target bins.
    pub bins: usize,
    /// Bin range; defaults to the observed target range.
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub train_csv: Option<PathBuf>,
    /// Explicit test file. Without one a seeded split holds out `test_fraction`.
    pub test_csv: Option<PathBuf>,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            n: 5000,
            m: 8,
            decay: 0.7,
            noise: 0.1,
            test_n: 1000,
            bins: 20,
            y_min: None,
            y_max: None,
            train_csv: None,
            test_csv: None,
            test_fraction: 0.2,
        }
    }
}

impl DataConfig {
    pub fn synthetic(&self, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n: self.n,
            m: self.m,
            bins: self.bins,
            decay: self.decay,
            noise: self.noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::value(
                "data.bins",
                format!("need at least 2 bins, got {}", self.bins),
            ));
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.test_fraction == 0.0 {
            return Err(Error::value("data.test_fraction", "must lie in (0, 1)"));
        }
        if let (Some(lo), Some(hi)) = (self.y_min, self.y_max) {
            if !(hi > lo) {
                return Err(Error::value("data.y_max", format!("{hi} is not above y_min {lo}")));
            }
        }
        match self.source {
            DataSource::Synthetic => {
                if self.m == 0 {
                    return Err(Error::value("data.m", "feature width must be positive"));
                }
                if self.n < self.bins {
                    return Err(Error::value(
                        "data.n",
                        format!("{} is smaller than the bin count", self.n),
                    ));
                }
                if !(self.decay > 0.0 && self.decay <= 1.0) {
                    return Err(Error::value("data.decay", format!("{} is outside (0, 1]", self.decay)));
                }
                if !(self.noise >= 0.0) {
                    return Err(Error::value("data.noise", "must be nonnegative"));
                }
                if self.test_n == 0 {
                    return Err(Error::value("data.test_n", "must be positive"));
                }
            }
            DataSource::Csv => {
                if self.train_csv.is_none() {
                    return Err(Error::value("data.train_csv", "required when data.source is csv"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorityConfig {
    pub lambda: f64,
    /// Divide the per-bin errors by their maximum before mixing.
    pub normalize_errors: bool,
    pub mode: AllocationMode,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            normalize_errors: false,
            mode: AllocationMode::Priority,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub regressor: RegressorConfig,
    /// `diffusion.seed` is replaced by the master seed at run time.
    pub diffusion: DiffusionTrainConfig,
    pub priority: PriorityConfig,
    pub gate: GateConfig,
    pub generate: GenerateConfig,
    pub mix: MixSchedule,
    pub head: HeadConfig,
    pub analytics: AnalyticsConfig,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.regressor.validate()?;
        self.diffusion.validate()?;
        if !(0.0..=1.0).contains(&self.priority.lambda) {
            return Err(Error::value(
                "priority.lambda",
                format!("{} is outside [0, 1]", self.priority.lambda),
            ));
        }
        self.gate.validate()?;
        if self.generate.max_attempts_factor == 0 {
            return Err(Error::value("generate.max_attempts_factor", "must be at least 1"));
        }
        if self.generate.sample_batch == 0 {
            return Err(Error::value("generate.sample_batch", "must be positive"));
        }
        self.mix.validate()?;
        if self.head.batch_size == 0 {
            return Err(Error::value("head.batch_size", "must be positive"));
        }
        if !(self.head.learning_rate > 0.0) {
            return Err(Error::value("head.learning_rate", "must be positive"));
        }
        if self.analytics.histogram_bins == 0 {
            return Err(Error::value("analytics.histogram_bins", "must be positive"));
        }
        if !(self.analytics.smoothing > 0.0) {
            return Err(Error::value("analytics.smoothing", "must be positive"));
        }
        Ok(())
    }

    /// The diffusion settings with the master seed applied.
    pub fn diffusion_config(&self) -> DiffusionTrainConfig {
        DiffusionTrainConfig {
            seed: self.seed,
            ..self.diffusion.clone()
        }
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    /// The output directory is excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("out_dir");
        }
        // serde_json maps are ordered, so this rendering is canonical.
        let text = serde_json::to_string(&v).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Collects dotted paths of keys in `given` that have no counterpart in
/// `known`. Values that are not objects on both sides are leaves.
fn unknown_keys(given: &Value, known: &Value, prefix: &str, out: &mut Vec<String>) {
    let (Value::Object(g), Value::Object(k)) = (given, known) else {
        return;
    };
    for (key, value) in g {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match k.get(key) {
            Some(known_value) => unknown_keys(value, known_value, &path, out),
            None => out.push(path),
        }
    }
}

fn strip_keys(value: &mut Value, paths: &[String]) {
    for path in paths {
        let mut parts: Vec<&str> = path.split('.').collect();
        let last = parts.pop().expect("nonempty path");
        let mut cur = &mut *value;
        for p in parts {
            cur = &mut cur[p];
        }
        if let Value::Object(map) = cur {
            map.remove(last);
        }
    }
}

/// Parses a config document. Absent keys take their defaults; unknown keys
/// are an error unless `permissive`, in which case they are dropped with a
/// warning. Type and range errors name the offending key.
pub fn parse_config_str(text: &str, permissive: bool) -> Result<PipelineConfig> {
    let mut value: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(text)?
    };
    if !value.is_object() {
        return Err(Error::config("config document must be a JSON object"));
    }
    let known = serde_json::to_value(PipelineConfig::default())?;
    let mut unknown = Vec::new();
    unknown_keys(&value, &known, "", &mut unknown);
    if let Some(first) = unknown.first() {
        if !permissive {
            return Err(Error::UnknownKey(first.clone()));
        }
        for key in &unknown {
            log::warn!("ignoring unknown configuration key `{key}`");
        }
        strip_keys(&mut value, &unknown);
    }
    let config: PipelineConfig = serde_path_to_error::deserialize(value).map_err(|e| Error::ConfigValue {
        key: e.path().to_string(),
        reason: e.inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>, permissive: bool) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config_str(&text, permissive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{Parameterization, ScheduleKind};

    #[test]
    fn empty_document_is_the_default() {
        let c = parse_config_str("{}", false).unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(parse_config_str("", false).unwrap(), c);
        assert_eq!(c.priority.lambda, 0.7);
        assert_eq!(c.gate.quantile, 0.95);
        assert_eq!(c.gate.min_samples, 5);
        assert_eq!(c.data.bins, 20);
        assert_eq!(c.diffusion.timesteps, 50);
        assert_eq!(c.diffusion.schedule, ScheduleKind::Cosine);
        assert_eq!(c.diffusion.offset, 0.008);
        assert_eq!(c.diffusion.parameterization, Parameterization::V);
        assert_eq!(c.diffusion.ema_decay, 0.999);
        assert_eq!(c.mix.ratio, 0.2);
    }

    #[test]
    fn lambda_out_of_range_names_the_key() {
        let err = parse_config_str(r#"{"priority": {"lambda": 1.5}}"#, false).unwrap_err();
        match err {
            Error::ConfigValue { key, .. } => assert_eq!(key, "priority.lambda"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_keys_are_strict_by_default() {
        let doc = r#"{"priority": {"lamda": 0.5}, "seed": 3}"#;
        match parse_config_str(doc, false).unwrap_err() {
            Error::UnknownKey(k) => assert_eq!(k, "priority.lamda"),
            other => panic!("unexpected {other}"),
        }
        let c = parse_config_str(doc, true).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.priority.lambda, 0.7);
    }

    #[test]
    fn type_errors_carry_the_path() {
        match parse_config_str(r#"{"gate": {"quantile": "high"}}"#, false).unwrap_err() {
            Error::ConfigValue { key, .. } => assert_eq!(key, "gate.quantile"),
            other => panic!("unexpected {other}"),
        }
        match parse_config_str(r#"{"diffusion": {"schedule": "sigmoid"}}"#, false).unwrap_err() {
            Error::ConfigValue { key, .. } => assert_eq!(key, "diffusion.schedule"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig {
            seed: 42,
            ..Default::default()
        };
        c.priority.mode = AllocationMode::Uniform;
        c.mix.per_epoch = Some(vec![0.1, 0.2]);
        c.data.y_min = Some(0.0);
        let back = parse_config_str(&c.to_json_pretty(), false).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn csv_source_needs_a_file() {
        let err = parse_config_str(r#"{"data": {"source": "csv"}}"#, false).unwrap_err();
        assert!(matches!(err, Error::ConfigValue { ref key, .. } if key == "data.train_csv"));
    }
}
