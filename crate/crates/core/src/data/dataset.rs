//! Labeled feature sets and their CSV representation.
//!
//! CSV layout: header `f0,...,f{m-1},target`, one row per sample, `.` as the
//! decimal point. Synthetic sets carry an extra trailing `origin` column.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatureSet {
    pub features: Matrix,
    pub targets: Vec<f64>,
    #[serde(default)]
    pub name: Option<String>,
}

impl LabeledFeatureSet {
    pub fn new(features: Matrix, targets: Vec<f64>) -> Result<Self> {
        if features.rows() != targets.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} targets",
                features.rows(),
                targets.len()
            )));
        }
        if !features.is_finite() || targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("dataset contains NaN or infinite values".into()));
        }
        Ok(Self {
            features,
            targets,
            name: None,
        })
    }

    /// A set that may be empty (synthetic output with zero quota).
    pub fn empty(width: usize) -> Self {
        Self {
            features: Matrix::zeros(0, width),
            targets: Vec::new(),
            name: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn target_range(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let lo = self.targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            name: self.name.clone(),
        }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut targets = self.targets.clone();
        targets.extend_from_slice(&other.targets);
        Ok(Self {
            features: self.features.vstack(&other.features)?,
            targets,
            name: self.name.clone(),
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path.as_ref(), self, None)
    }

    /// Writes the set with a trailing `origin` column holding `origin` on every row.
    pub fn save_csv_with_origin(&self, path: impl AsRef<Path>, origin: &str) -> Result<()> {
        write_csv(path.as_ref(), self, Some(origin))
    }
}

/// Expected CSV shape. `features: None` accepts any width.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsvSchema {
    pub features: Option<usize>,
    pub target_range: Option<(f64, f64)>,
    /// Accept a header-only file (synthetic output with zero quota).
    pub allow_empty: bool,
}

fn write_csv(path: &Path, set: &LabeledFeatureSet, origin: Option<&str>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..set.width()).map(|j| format!("f{j}")).collect();
    header.push("target".into());
    if origin.is_some() {
        header.push("origin".into());
    }
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for (i, &y) in set.targets.iter().enumerate() {
        line.clear();
        for v in set.features.row(i) {
            // Display for f64 is the shortest representation that round-trips.
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!("{y}"));
        if let Some(o) = origin {
            line.push(',');
            line.push_str(o);
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<LabeledFeatureSet> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Format {
                path: shown.clone(),
                reason: e.to_string(),
            },
            _ => Error::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Format {
            path: shown,
            reason: "empty file".into(),
        });
    }
    let target_col = headers.iter().position(|h| h == "target").ok_or_else(|| Error::Parse {
        path: shown.clone(),
        row: 1,
        column: "target".into(),
        reason: "missing column".into(),
    })?;
    let width = target_col;
    for (j, h) in headers.iter().take(width).enumerate() {
        if h != format!("f{j}") {
            return Err(Error::Parse {
                path: shown,
                row: 1,
                column: format!("f{j}"),
                reason: format!("missing column (found `{h}`)"),
            });
        }
    }
    for h in headers.iter().skip(target_col + 1) {
        if h != "origin" {
            return Err(Error::Parse {
                path: shown,
                row: 1,
                column: h.to_string(),
                reason: "unexpected column".into(),
            });
        }
    }
    if let Some(expected) = schema.features {
        if expected != width {
            return Err(Error::Parse {
                path: shown,
                row: 1,
                column: format!("f{}", width.min(expected)),
                reason: format!("expected {expected} feature columns, found {width}"),
            });
        }
    }
    if width == 0 {
        return Err(Error::Format {
            path: shown,
            reason: "no feature columns".into(),
        });
    }

    let mut data = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record?;
        if record.len() < target_col + 1 {
            return Err(Error::Parse {
                path: shown,
                row: line,
                column: headers.get(record.len()).unwrap_or("target").to_string(),
                reason: "missing value".into(),
            });
        }
        for j in 0..=target_col {
            let cell = &record[j];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: shown.clone(),
                row: line,
                column: headers[j].to_string(),
                reason: format!("not a number: `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: shown.clone(),
                    row: line,
                    column: headers[j].to_string(),
                    reason: "non-finite value".into(),
                });
            }
            if j == target_col {
                if let Some((lo, hi)) = schema.target_range {
                    if v < lo || v > hi {
                        return Err(Error::Parse {
                            path: shown.clone(),
                            row: line,
                            column: "target".into(),
                            reason: format!("target {v} outside [{lo}, {hi}]"),
                        });
                    }
                }
                targets.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if targets.is_empty() && schema.allow_empty {
        return Ok(LabeledFeatureSet::empty(width));
    }
    if targets.is_empty() {
        return Err(Error::Format {
            path: shown,
            reason: "no data rows".into(),
        });
    }
    let features = Matrix::from_vec(targets.len(), width, data)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let mut set = LabeledFeatureSet::new(features, targets)?;
    set.name = name;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn parses_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "f0,f1,target\n1,2,3\n4,5,6\n7,8.5,9\n").unwrap();
        let set = load_csv(&p, CsvSchema::default()).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.width(), 2);
        assert_eq!(set.features[(2, 1)], 8.5);
        assert_eq!(set.targets, vec![3.0, 6.0, 9.0]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "f0,f1,target\n1,2,3\n4,abc,6\n").unwrap();
        match load_csv(&p, CsvSchema::default()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "f1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_target_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "f0,f1\n1,2\n").unwrap();
        assert!(matches!(
            load_csv(&p, CsvSchema::default()),
            Err(Error::Parse { column, .. }) if column == "target"
        ));
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "").unwrap();
        assert!(load_csv(&p, CsvSchema::default()).is_err());
        fs::write(&p, "f0,target\n").unwrap();
        assert!(load_csv(&p, CsvSchema::default()).is_err());
        let lenient = CsvSchema {
            allow_empty: true,
            ..Default::default()
        };
        let empty = load_csv(&p, lenient).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.width(), 1);
    }

    #[test]
    fn out_of_range_target_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "f0,target\n1,150\n").unwrap();
        let schema = CsvSchema {
            features: None,
            target_range: Some((0.0, 100.0)),
            ..Default::default()
        };
        assert!(load_csv(&p, schema).is_err());
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let features = Matrix::from_rows(&[[0.1, 1.0 / 3.0], [-2.5e-7, 12345.678901234]]).unwrap();
        let set = LabeledFeatureSet::new(features, vec![std::f64::consts::PI, -1e-300]).unwrap();
        set.save_csv(&p).unwrap();
        let back = load_csv(&p, CsvSchema::default()).unwrap();
        assert!(back.features.max_abs_diff(&set.features) <= 1e-12);
        assert_eq!(back.targets, set.targets);

        set.save_csv_with_origin(&p, "synthetic").unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("f0,f1,target,origin\n"));
        assert_eq!(load_csv(&p, CsvSchema::default()).unwrap().len(), 2);
    }
}
