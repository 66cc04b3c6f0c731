//! Similarity, nearest-neighbour, divergence and PCA diagnostics for
//! comparing synthetic features with real ones.

use serde::{Deserialize, Serialize};

use crate::data::{BinSpec, LabeledFeatureSet};
use crate::error::{Error, Result};
use crate::numeric::linalg::{covariance, symmetric_eigenpairs};
use crate::numeric::{Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub mean: f64,
    pub std: f64,
    pub pairs: usize,
    /// Zero-norm rows left out of every pair.
    pub excluded: usize,
}

fn unit_rows(x: &Matrix) -> (Vec<Vec<f64>>, usize) {
    let mut out = Vec::with_capacity(x.rows());
    let mut excluded = 0;
    for r in x.iter_rows() {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.push(r.iter().map(|v| v / norm).collect());
        } else {
            excluded += 1;
        }
    }
    (out, excluded)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    // Welford
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let std = if n > 0 { (m2 / n as f64).max(0.0).sqrt() } else { 0.0 };
    (mean, std, n)
}

fn pair_stats(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    within: bool,
    max_pairs: usize,
    seed: u64,
    excluded: usize,
) -> Result<SimilarityStats> {
    let total = if within {
        a.len() * a.len().saturating_sub(1) / 2
    } else {
        a.len() * b.len()
    };
    if total == 0 {
        return Err(Error::shape("no pairs of nonzero rows to compare"));
    }
    let cos = |i: usize, j: usize| dot(&a[i], &b[j]).clamp(-1.0, 1.0);
    let (mean, std, pairs) = if total <= max_pairs {
        let iter: Box<dyn Iterator<Item = f64>> = if within {
            Box::new((0..a.len()).flat_map(move |i| (i + 1..a.len()).map(move |j| cos(i, j))))
        } else {
            Box::new((0..a.len()).flat_map(move |i| (0..b.len()).map(move |j| cos(i, j))))
        };
        mean_std(iter)
    } else {
        let mut rng = SeededRng::substream(seed, "cosine-pairs", 0);
        let draws = (0..max_pairs).map(|_| loop {
            let i = rng.below(a.len());
            let j = rng.below(b.len());
            if !within || i != j {
                break cos(i, j);
            }
        });
        mean_std(draws.collect::<Vec<_>>().into_iter())
    };
    Ok(SimilarityStats {
        mean,
        std,
        pairs,
        excluded,
    })
}

/// Cosine similarity over cross pairs `(a_i, b_j)`, enumerated exactly when
/// there are at most `max_pairs`, otherwise sampled.
pub fn cosine_stats(a: &Matrix, b: &Matrix, max_pairs: usize, seed: u64) -> Result<SimilarityStats> {
    if a.cols() != b.cols() {
        return Err(Error::shape(format!("widths {} and {}", a.cols(), b.cols())));
    }
    let (ua, ea) = unit_rows(a);
    let (ub, eb) = unit_rows(b);
    pair_stats(&ua, &ub, false, max_pairs, seed, ea + eb)
}

/// Cosine similarity over distinct pairs within one set.
pub fn cosine_stats_within(a: &Matrix, max_pairs: usize, seed: u64) -> Result<SimilarityStats> {
    let (ua, ea) = unit_rows(a);
    pair_stats(&ua, &ua, true, max_pairs, seed, ea)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub p05: f64,
    pub p25: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Linear-interpolation percentile of sorted data, `p` in `[0, 1]`.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::shape("summary of an empty sample"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Summary {
        count: s.len(),
        mean: s.iter().sum::<f64>() / s.len() as f64,
        median: percentile(&s, 0.5),
        min: s[0],
        max: s[s.len() - 1],
        p05: percentile(&s, 0.05),
        p25: percentile(&s, 0.25),
        p75: percentile(&s, 0.75),
        p95: percentile(&s, 0.95),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnAnalysis {
    /// Index of the nearest real row for each synthetic row.
    pub neighbor: Vec<usize>,
    /// Cosine distance `1 − cos` to that row.
    pub distance: Vec<f64>,
    pub label_gap: Vec<f64>,
    pub distance_summary: Summary,
    pub label_gap_summary: Summary,
}

/// Exact nearest real neighbour of every synthetic row under cosine distance.
pub fn nn_analysis(synthetic: &LabeledFeatureSet, real: &LabeledFeatureSet) -> Result<NnAnalysis> {
    if real.is_empty() {
        return Err(Error::shape("nearest-neighbour analysis needs real rows"));
    }
    if synthetic.is_empty() {
        return Err(Error::shape("nearest-neighbour analysis needs synthetic rows"));
    }
    if synthetic.width() != real.width() {
        return Err(Error::shape(format!(
            "widths {} and {}",
            synthetic.width(),
            real.width()
        )));
    }
    let unit = |r: &[f64]| {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            r.iter().map(|v| v / n).collect()
        } else {
            vec![0.0; r.len()]
        }
    };
    let real_unit: Vec<Vec<f64>> = real.features.iter_rows().map(unit).collect();
    let mut neighbor = Vec::with_capacity(synthetic.len());
    let mut distance = Vec::with_capacity(synthetic.len());
    let mut label_gap = Vec::with_capacity(synthetic.len());
    for (s, &ys) in synthetic.features.iter_rows().zip(&synthetic.targets) {
        let u: Vec<f64> = unit(s);
        let (best, sim) =
            real_unit
                .iter()
                .enumerate()
                .map(|(j, r)| (j, dot(&u, r)))
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (j, c)| if c > acc.1 { (j, c) } else { acc },
                );
        neighbor.push(best);
        distance.push((1.0 - sim.clamp(-1.0, 1.0)).max(0.0));
        label_gap.push((ys - real.targets[best]).abs());
    }
    Ok(NnAnalysis {
        distance_summary: summarize(&distance)?,
        label_gap_summary: summarize(&label_gap)?,
        neighbor,
        distance,
        label_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDivergence {
    pub bin: usize,
    pub real: usize,
    pub synthetic: usize,
    pub kl: Option<f64>,
    pub js: Option<f64>,
    pub w1: Option<f64>,
    pub skipped: Option<String>,
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

fn histogram(x: &[f64], lo: f64, hi: f64, bins: usize, eps: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in x {
        let k = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        h[k] += 1.0;
    }
    let n = x.len() as f64;
    let total: f64 = h.iter().map(|c| c / n + eps).sum();
    h.iter().map(|c| (c / n + eps) / total).collect()
}

/// `∫|F_a − F_b|` between two empirical distributions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut w = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        w += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    w
}

fn first_component(x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mean, cov) = covariance(x)?;
    let e = symmetric_eigenpairs(&cov, 1, 1e-12, 5_000)?;
    let mut v = e[0].1.clone();
    if v.iter().all(|c| *c == 0.0) {
        v[0] = 1.0;
    }
    Ok((mean, v))
}

/// Per-bin KL(real‖synthetic), JS and W1 on the 1-D projection onto the
/// first principal component of the bin's real features.
pub fn bin_divergences(
    real: &LabeledFeatureSet,
    synthetic: &LabeledFeatureSet,
    bins: &BinSpec,
    histogram_bins: usize,
    smoothing: f64,
) -> Result<Vec<BinDivergence>> {
    if real.width() != synthetic.width() && !synthetic.is_empty() {
        return Err(Error::shape(format!(
            "widths {} and {}",
            real.width(),
            synthetic.width()
        )));
    }
    if histogram_bins == 0 {
        return Err(Error::value("analytics.histogram_bins", "must be positive"));
    }
    let ra = bins.assign(&real.targets)?;
    let sa = bins.assign(&synthetic.targets)?;
    let mut out = Vec::with_capacity(bins.bins);
    for bin in 0..bins.bins {
        let ri: Vec<usize> = (0..ra.len()).filter(|&i| ra[i] == bin).collect();
        let si: Vec<usize> = (0..sa.len()).filter(|&i| sa[i] == bin).collect();
        let mut entry = BinDivergence {
            bin,
            real: ri.len(),
            synthetic: si.len(),
            kl: None,
            js: None,
            w1: None,
            skipped: None,
        };
        if ri.len() < 2 {
            entry.skipped = Some(format!("{} real samples (need 2)", ri.len()));
        } else if si.is_empty() {
            entry.skipped = Some("no synthetic samples".into());
        } else {
            let xr = real.features.select_rows(&ri);
            let xs = synthetic.features.select_rows(&si);
            let (mean, v) = first_component(&xr)?;
            let project = |x: &Matrix| -> Vec<f64> {
                x.iter_rows()
                    .map(|r| r.iter().zip(&mean).zip(&v).map(|((a, m), c)| (a - m) * c).sum())
                    .collect()
            };
            let (pr, ps) = (project(&xr), project(&xs));
            let lo = pr.iter().chain(&ps).copied().fold(f64::INFINITY, f64::min);
            let hi = pr.iter().chain(&ps).copied().fold(f64::NEG_INFINITY, f64::max);
            let p = histogram(&pr, lo, hi, histogram_bins, smoothing);
            let q = histogram(&ps, lo, hi, histogram_bins, smoothing);
            let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
            entry.kl = Some(kl(&p, &q));
            entry.js = Some((0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).min(std::f64::consts::LN_2));
            entry.w1 = Some(wasserstein_1d(&pr, &ps));
        }
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Leading eigenvalues divided by the total variance.
    pub ratios: Vec<f64>,
    pub components: Vec<Vec<f64>>,
}

impl Pca {
    /// Coordinates on the first two components (zeros when `m < 2`).
    pub fn project2(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), 2);
        for (i, r) in x.iter_rows().enumerate() {
            for (c, comp) in self.components.iter().take(2).enumerate() {
                out.row_mut(i)[c] = r.iter().zip(&self.mean).zip(comp).map(|((a, m), v)| (a - m) * v).sum();
            }
        }
        out
    }
}

/// Top-`k` explained-variance ratios by power iteration with deflation.
pub fn pca_variance(x: &Matrix, k: usize) -> Result<Pca> {
    let (n, m) = x.shape();
    if k > m {
        return Err(Error::shape(format!(
            "asked for {k} components of {m}-dimensional data"
        )));
    }
    if n < 2 {
        return Err(Error::shape("PCA needs at least 2 rows"));
    }
    let (mean, cov) = covariance(x)?;
    let total: f64 = (0..m).map(|i| cov[(i, i)]).sum();
    let keep = k.max(2.min(m));
    let pairs = symmetric_eigenpairs(&cov, keep, 1e-12, 20_000)?;
    let ratios = pairs
        .iter()
        .take(k)
        .map(|(l, _)| if total > 0.0 { (l / total).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    Ok(Pca {
        mean,
        ratios,
        components: pairs.into_iter().map(|(_, v)| v).collect(),
    })
}
