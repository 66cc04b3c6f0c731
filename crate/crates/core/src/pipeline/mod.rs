//! Configuration, artifact persistence and stage orchestration.

pub mod artifacts;
pub mod config;
pub mod stages;

pub use artifacts::{load_checkpoint, save_checkpoint, Checkpoint, RunLayout, RunManifest, StageRecord, StageStatus};
pub use config::{parse_config, parse_config_str, DataConfig, DataSource, PipelineConfig, PriorityConfig};
pub use stages::{run_pipeline, run_stage, run_stages, Evaluation, PriorityArtifact, RunSummary, Stage, StageOptions};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LATENTDIFF_OUT_DIR";

/// `--out-dir`, then the config's `out_dir`, then the environment, then `runs/latest`.
pub fn resolve_out_dir(flag: Option<&std::path::Path>, config: &PipelineConfig) -> std::path::PathBuf {
    flag.map(Into::into)
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(Into::into))
        .unwrap_or_else(|| "runs/latest".into())
}
