use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{
    bin_divergences, cosine_stats, cosine_stats_within, nn_analysis, pca_variance, BinDivergence, Pca, SimilarityStats,
    Summary,
};
use crate::data::{BinSpec, LabeledFeatureSet};
use crate::error::Result;
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub max_pairs: usize,
    pub histogram_bins: usize,
    pub smoothing: f64,
    pub pca_components: usize,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            max_pairs: 1_000_000,
            histogram_bins: 50,
            smoothing: 1e-6,
            pca_components: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStats {
    pub real_mean: Vec<f64>,
    pub real_std: Vec<f64>,
    pub synthetic_mean: Vec<f64>,
    pub synthetic_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub real_count: usize,
    pub synthetic_count: usize,
    pub real_real: Option<SimilarityStats>,
    pub synthetic_synthetic: Option<SimilarityStats>,
    pub real_synthetic: Option<SimilarityStats>,
    pub nn_distance: Option<Summary>,
    pub nn_label_gap: Option<Summary>,
    pub divergences: Vec<BinDivergence>,
    /// Explained-variance ratios of the real features.
    pub pca_real: Vec<f64>,
    pub pca_synthetic: Option<Vec<f64>>,
    pub dimensions: Option<DimensionStats>,
}

fn column_std(x: &Matrix, mean: &[f64]) -> Vec<f64> {
    let n = x.rows().max(1) as f64;
    (0..x.cols())
        .map(|j| (x.iter_rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect()
}

pub fn quality_report(
    real: &LabeledFeatureSet,
    synthetic: &LabeledFeatureSet,
    bins: &BinSpec,
    config: &AnalyticsConfig,
    seed: u64,
) -> Result<QualityReport> {
    let k = config.pca_components.min(real.width());
    let have_syn = !synthetic.is_empty();
    let pca_real = pca_variance(&real.features, k)?.ratios;
    let nn = if have_syn {
        Some(nn_analysis(synthetic, real)?)
    } else {
        None
    };
    let dimensions = have_syn.then(|| {
        let rm = real.features.column_means();
        let sm = synthetic.features.column_means();
        DimensionStats {
            real_std: column_std(&real.features, &rm),
            synthetic_std: column_std(&synthetic.features, &sm),
            real_mean: rm,
            synthetic_mean: sm,
        }
    });
    Ok(QualityReport {
        real_count: real.len(),
        synthetic_count: synthetic.len(),
        real_real: cosine_stats_within(&real.features, config.max_pairs, seed).ok(),
        synthetic_synthetic: if have_syn {
            cosine_stats_within(&synthetic.features, config.max_pairs, seed).ok()
        } else {
            None
        },
        real_synthetic: if have_syn {
            cosine_stats(&real.features, &synthetic.features, config.max_pairs, seed).ok()
        } else {
            None
        },
        nn_distance: nn.as_ref().map(|n| n.distance_summary),
        nn_label_gap: nn.as_ref().map(|n| n.label_gap_summary),
        divergences: bin_divergences(real, synthetic, bins, config.histogram_bins, config.smoothing)?,
        pca_real,
        pca_synthetic: if synthetic.len() >= 2 {
            Some(pca_variance(&synthetic.features, k)?.ratios)
        } else {
            None
        },
        dimensions,
    })
}

/// Writes `pc1,pc2,origin,label` for real and synthetic rows projected onto
/// the leading components of the real features.
pub fn write_projection_csv(
    path: impl AsRef<Path>,
    real: &LabeledFeatureSet,
    synthetic: &LabeledFeatureSet,
) -> Result<Pca> {
    let pca = pca_variance(&real.features, 2.min(real.width()))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "pc1,pc2,origin,label")?;
    for (set, origin) in [(real, "real"), (synthetic, "synthetic")] {
        if set.is_empty() {
            continue;
        }
        let p = pca.project2(&set.features);
        for (r, y) in p.iter_rows().zip(&set.targets) {
            writeln!(out, "{},{},{origin},{y}", r[0], r[1])?;
        }
    }
    out.flush()?;
    Ok(pca)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SeededRng;

    fn sample(n: usize, seed: u64) -> LabeledFeatureSet {
        let mut rng = SeededRng::new(seed, 0);
        let y: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let mut x = rng.normal_matrix(n, 4);
        for (i, yi) in y.iter().enumerate() {
            x.row_mut(i)[0] += 5.0 * yi;
        }
        LabeledFeatureSet::new(x, y).unwrap()
    }

    #[test]
    fn report_fields_are_in_range() {
        let bins = BinSpec::new(0.0, 1.0, 4).unwrap();
        let r = quality_report(&sample(200, 1), &sample(80, 2), &bins, &AnalyticsConfig::default(), 0).unwrap();
        for s in [r.real_real, r.synthetic_synthetic, r.real_synthetic] {
            let s = s.unwrap();
            assert!((-1.0..=1.0).contains(&s.mean));
        }
        for d in &r.divergences {
            assert!(d.kl.unwrap() >= 0.0 && d.js.unwrap() <= std::f64::consts::LN_2);
        }
        assert!(r.pca_real.iter().sum::<f64>() <= 1.0 + 1e-9);
        assert_eq!(r.divergences.len(), 4);
    }

    #[test]
    fn empty_synthetic_set_is_reported_not_fatal() {
        let bins = BinSpec::new(0.0, 1.0, 4).unwrap();
        let r = quality_report(
            &sample(50, 1),
            &LabeledFeatureSet::empty(4),
            &bins,
            &AnalyticsConfig::default(),
            0,
        )
        .unwrap();
        assert!(r.real_synthetic.is_none());
        assert!(r.divergences.iter().all(|d| d.skipped.is_some()));
    }

    #[test]
    fn projection_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proj.csv");
        write_projection_csv(&path, &sample(10, 1), &sample(3, 2)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "pc1,pc2,origin,label");
        assert_eq!(lines.len(), 14);
        assert!(lines[13].contains(",synthetic,"));
    }
}
