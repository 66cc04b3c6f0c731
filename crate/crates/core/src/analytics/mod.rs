//! Feature-quality diagnostics for synthetic versus real features.

pub mod report;
pub mod stats;

pub use report::{quality_report, write_projection_csv, AnalyticsConfig, DimensionStats, QualityReport};
pub use stats::{
    bin_divergences, cosine_stats, cosine_stats_within, nn_analysis, pca_variance, summarize, wasserstein_1d,
    BinDivergence, NnAnalysis, Pca, SimilarityStats, Summary,
};
