//! Equal-width target binning and many/median/few shot partitioning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub y_min: f64,
    pub y_max: f64,
    pub bins: usize,
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
}

impl BinSpec {
    pub fn new(y_min: f64, y_max: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::value("data.bins", format!("need at least 2 bins, got {bins}")));
        }
        if !(y_max > y_min) || !y_min.is_finite() || !y_max.is_finite() {
            return Err(Error::value(
                "data.y_range",
                format!("[{y_min}, {y_max}] is not a proper interval"),
            ));
        }
        let width = (y_max - y_min) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|k| y_min + k as f64 * width).collect();
        edges[bins] = y_max;
        let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            y_min,
            y_max,
            bins,
            edges,
            centers,
        })
    }

    /// `⌊(y − y_min)/(y_max − y_min)·K⌋`, with `y_max` itself in the last bin.
    pub fn bin_index(&self, y: f64) -> Result<usize> {
        if !(y >= self.y_min && y <= self.y_max) {
            return Err(Error::OutOfRange {
                value: y,
                min: self.y_min,
                max: self.y_max,
            });
        }
        let k = self.bins;
        let raw = ((y - self.y_min) / (self.y_max - self.y_min) * k as f64).floor();
        let mut b = (raw as usize).min(k - 1);
        // keep the result consistent with the stored edges under roundoff
        if b > 0 && y < self.edges[b] {
            b -= 1;
        } else if b + 1 < k && y >= self.edges[b + 1] {
            b += 1;
        }
        Ok(b)
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.centers[bin]
    }

    /// Per-bin sample counts; fails on the first target outside the range.
    pub fn counts(&self, targets: &[f64]) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.bins];
        for &y in targets {
            counts[self.bin_index(y)?] += 1;
        }
        Ok(counts)
    }

    pub fn assign(&self, targets: &[f64]) -> Result<Vec<usize>> {
        targets.iter().map(|&y| self.bin_index(y)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Many,
    Median,
    Few,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Many, Region::Median, Region::Few];

    pub fn name(self) -> &'static str {
        match self {
            Region::Many => "many",
            Region::Median => "median",
            Region::Few => "few",
        }
    }
}

pub const MANY_SHOT_ABOVE: usize = 70;
pub const FEW_SHOT_BELOW: usize = 30;

/// Shot region of every bin, from training counts: many ⇔ count > 70,
/// median ⇔ 30 ≤ count ≤ 70, few ⇔ count < 30.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotPartition {
    pub labels: Vec<Region>,
    pub many_above: usize,
    pub few_below: usize,
}

impl ShotPartition {
    pub fn from_counts(counts: &[usize]) -> Self {
        let labels = counts
            .iter()
            .map(|&c| {
                if c > MANY_SHOT_ABOVE {
                    Region::Many
                } else if c < FEW_SHOT_BELOW {
                    Region::Few
                } else {
                    Region::Median
                }
            })
            .collect();
        Self {
            labels,
            many_above: MANY_SHOT_ABOVE,
            few_below: FEW_SHOT_BELOW,
        }
    }

    pub fn region(&self, bin: usize) -> Region {
        self.labels[bin]
    }
}

pub fn shot_partition(counts: &[usize]) -> ShotPartition {
    ShotPartition::from_counts(counts)
}
