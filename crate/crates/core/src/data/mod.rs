//! Dataset ingestion, standardization, binning, shot partitioning and the
//! synthetic long-tailed benchmark.

pub mod binning;
pub mod dataset;
pub mod standardize;
pub mod synthetic;

pub use binning::{shot_partition, BinSpec, Region, ShotPartition};
pub use dataset::{load_csv, CsvSchema, LabeledFeatureSet};
pub use standardize::{standardize_fit_transform, Standardizer, TargetNormalizer};
pub use synthetic::{make_imbalanced_synthetic, SyntheticConfig};
