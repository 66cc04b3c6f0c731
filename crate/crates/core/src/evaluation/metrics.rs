//! Shot-stratified regression metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{BinSpec, Region, ShotPartition};
use crate::error::{Error, Result};

pub const GM_FLOOR: f64 = 1e-8;

pub const REGIONS: [&str; 4] = ["all", "many", "median", "few"];
pub const METRICS: [&str; 5] = ["mae", "mse", "gm", "pearson", "r2"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub count: usize,
    pub mae: f64,
    pub mse: f64,
    pub gm: f64,
    pub pearson: f64,
    pub r2: f64,
    /// Zero variance in predictions or targets; Pearson (and R² when the
    /// targets are constant) are reported as 0.
    pub degenerate: bool,
}

impl RegionMetrics {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "mae" => Some(self.mae),
            "mse" => Some(self.mse),
            "gm" => Some(self.gm),
            "pearson" => Some(self.pearson),
            "r2" => Some(self.r2),
            _ => None,
        }
    }
}

pub fn region_metrics(pred: &[f64], target: &[f64]) -> Result<RegionMetrics> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::shape("metrics of an empty sample"));
    }
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut log = 0.0;
    for (&p, &y) in pred.iter().zip(target) {
        let e = (p - y).abs();
        abs += e;
        sq += e * e;
        log += e.max(GM_FLOOR).ln();
    }
    let mp = pred.iter().sum::<f64>() / n;
    let my = target.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&p, &y) in pred.iter().zip(target) {
        sxy += (p - mp) * (y - my);
        sxx += (p - mp) * (p - mp);
        syy += (y - my) * (y - my);
    }
    let degenerate = !(sxx > 0.0 && syy > 0.0);
    let pearson = if degenerate {
        0.0
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
    };
    let r2 = if syy > 0.0 { 1.0 - sq / syy } else { 0.0 };
    Ok(RegionMetrics {
        count: pred.len(),
        mae: abs / n,
        mse: sq / n,
        gm: (log / n).exp(),
        pearson,
        r2,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Map<String, Value>", try_from = "Map<String, Value>")]
pub struct MetricsReport {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    /// Keyed by region name; `None` when the region has no test samples.
    pub regions: BTreeMap<String, Option<RegionMetrics>>,
}

impl MetricsReport {
    pub fn region(&self, region: &str) -> Option<&RegionMetrics> {
        self.regions.get(region).and_then(|r| r.as_ref())
    }

    /// Flat value such as `mae.few`.
    pub fn get(&self, key: &str) -> Option<f64> {
        let (metric, region) = key.split_once('.')?;
        self.region(region)?.metric(metric)
    }

    pub fn count(&self, region: &str) -> usize {
        self.region(region).map_or(0, |r| r.count)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per region: `region,count,mae,mse,gm,pearson,r2,degenerate`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("region,count,mae,mse,gm,pearson,r2,degenerate\n");
        for region in REGIONS {
            match self.region(region) {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "{region},{},{},{},{},{},{},{}",
                        r.count, r.mae, r.mse, r.gm, r.pearson, r.r2, r.degenerate
                    );
                }
                None => {
                    let _ = writeln!(out, "{region},0,,,,,,");
                }
            }
        }
        out
    }
}

impl From<MetricsReport> for Map<String, Value> {
    fn from(r: MetricsReport) -> Self {
        let mut map = Map::new();
        map.insert("report".into(), Value::String(r.name));
        map.insert("seed".into(), Value::from(r.seed));
        map.insert("config_hash".into(), Value::String(r.config_hash));
        for region in REGIONS {
            let m = r.regions.get(region).copied().flatten();
            map.insert(format!("count.{region}"), Value::from(m.map_or(0, |m| m.count)));
            for metric in METRICS {
                let v = m.and_then(|m| m.metric(metric)).map_or(Value::Null, Value::from);
                map.insert(format!("{metric}.{region}"), v);
            }
            map.insert(
                format!("degenerate.{region}"),
                m.map_or(Value::Null, |m| Value::Bool(m.degenerate)),
            );
        }
        map
    }
}

impl TryFrom<Map<String, Value>> for MetricsReport {
    type Error = String;

    fn try_from(map: Map<String, Value>) -> std::result::Result<Self, String> {
        let text = |k: &str| {
            map.get(k)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or(format!("missing `{k}`"))
        };
        let name = text("report")?;
        let config_hash = text("config_hash")?;
        let seed = map.get("seed").and_then(Value::as_u64).ok_or("missing `seed`")?;
        let mut regions = BTreeMap::new();
        for region in REGIONS {
            let count = map
                .get(&format!("count.{region}"))
                .and_then(Value::as_u64)
                .ok_or(format!("missing `count.{region}`"))? as usize;
            let entry = if count == 0 {
                None
            } else {
                let f = |metric: &str| {
                    map.get(&format!("{metric}.{region}"))
                        .and_then(Value::as_f64)
                        .ok_or(format!("missing `{metric}.{region}`"))
                };
                Some(RegionMetrics {
                    count,
                    mae: f("mae")?,
                    mse: f("mse")?,
                    gm: f("gm")?,
                    pearson: f("pearson")?,
                    r2: f("r2")?,
                    degenerate: map
                        .get(&format!("degenerate.{region}"))
                        .and_then(Value::as_bool)
                        .unwrap_or(false),
                })
            };
            regions.insert(region.to_string(), entry);
        }
        Ok(Self {
            name,
            seed,
            config_hash,
            regions,
        })
    }
}

/// Metrics over all test samples and per shot region. The partition comes
/// from training counts; test targets are binned with the same spec.
pub fn compute_metrics(
    predictions: &[f64],
    targets: &[f64],
    partition: &ShotPartition,
    bins: &BinSpec,
) -> Result<MetricsReport> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::shape("cannot evaluate an empty test set"));
    }
    if partition.labels.len() != bins.bins {
        return Err(Error::shape(format!(
            "partition has {} bins, bin spec {}",
            partition.labels.len(),
            bins.bins
        )));
    }
    let mut regions = BTreeMap::new();
    regions.insert("all".to_string(), Some(region_metrics(predictions, targets)?));
    let assignment = bins.assign(targets)?;
    for region in Region::ALL {
        let (p, y): (Vec<f64>, Vec<f64>) = assignment
            .iter()
            .zip(predictions.iter().zip(targets))
            .filter(|(&b, _)| partition.region(b) == region)
            .map(|(_, (&p, &y))| (p, y))
            .unzip();
        let m = if p.is_empty() {
            None
        } else {
            Some(region_metrics(&p, &y)?)
        };
        regions.insert(region.name().to_string(), m);
    }
    Ok(MetricsReport {
        name: String::new(),
        seed: 0,
        config_hash: String::new(),
        regions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub region: String,
    pub before: Option<f64>,
    pub after: Option<f64>,
    /// `after − before`.
    pub delta: Option<f64>,
    /// Percentage improvement, positive when `after` is better.
    pub relative_improvement: Option<f64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub before: String,
    pub after: String,
    pub deltas: Vec<MetricDelta>,
}

impl DeltaReport {
    pub fn find(&self, metric: &str, region: &str) -> Option<&MetricDelta> {
        self.deltas.iter().find(|d| d.metric == metric && d.region == region)
    }
}

fn higher_is_better(metric: &str) -> bool {
    matches!(metric, "pearson" | "r2")
}

pub fn compare_reports(before: &MetricsReport, after: &MetricsReport) -> Result<DeltaReport> {
    let mut deltas = Vec::new();
    for region in REGIONS {
        let (a, b) = (before.region(region), after.region(region));
        if let (Some(a), Some(b)) = (a, b) {
            if a.count != b.count {
                return Err(Error::ReportMismatch(format!(
                    "region `{region}` has {} samples in `{}` and {} in `{}`",
                    a.count, before.name, b.count, after.name
                )));
            }
        }
        for metric in METRICS {
            let va = a.and_then(|r| r.metric(metric));
            let vb = b.and_then(|r| r.metric(metric));
            let entry = match (va, vb) {
                (Some(x), Some(y)) => {
                    let gain = if higher_is_better(metric) { y - x } else { x - y };
                    MetricDelta {
                        metric: metric.into(),
                        region: region.into(),
                        before: Some(x),
                        after: Some(y),
                        delta: Some(y - x),
                        relative_improvement: (x != 0.0).then(|| 100.0 * gain / x.abs()),
                        reason: None,
                    }
                }
                _ => {
                    let missing = if va.is_none() { &before.name } else { &after.name };
                    MetricDelta {
                        metric: metric.into(),
                        region: region.into(),
                        before: va,
                        after: vb,
                        delta: None,
                        relative_improvement: None,
                        reason: Some(format!("region `{region}` absent in report `{missing}`")),
                    }
                }
            };
            deltas.push(entry);
        }
    }
    Ok(DeltaReport {
        before: before.name.clone(),
        after: after.name.clone(),
        deltas,
    })
}
