//! Shot-stratified regression metrics and report comparison.

pub mod metrics;

pub use metrics::{
    compare_reports, compute_metrics, region_metrics, DeltaReport, MetricDelta, MetricsReport, RegionMetrics, GM_FLOOR,
    METRICS, REGIONS,
};
