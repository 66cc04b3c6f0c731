//! On-disk layout of a run, model checkpoints and the run manifest.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "latentdiff-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Paths of every artifact relative to a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn join(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn config(&self) -> PathBuf {
        self.join("config.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.join("manifest.json")
    }
    pub fn train_data(&self) -> PathBuf {
        self.join("data/train.csv")
    }
    pub fn test_data(&self) -> PathBuf {
        self.join("data/test.csv")
    }
    pub fn bins(&self) -> PathBuf {
        self.join("data/bins.json")
    }
    pub fn vanilla_model(&self) -> PathBuf {
        self.join("models/vanilla.json")
    }
    pub fn diffusion_model(&self) -> PathBuf {
        self.join("models/diffusion.json")
    }
    pub fn augmented_model(&self) -> PathBuf {
        self.join("models/augmented.json")
    }
    pub fn train_features(&self) -> PathBuf {
        self.join("features/train.csv")
    }
    pub fn synthetic(&self) -> PathBuf {
        self.join("synthetic/synthetic.csv")
    }
    pub fn priority(&self) -> PathBuf {
        self.join("synthetic/priority.json")
    }
    pub fn vanilla_trace(&self) -> PathBuf {
        self.join("traces/vanilla.json")
    }
    pub fn diffusion_trace(&self) -> PathBuf {
        self.join("traces/diffusion.json")
    }
    pub fn head_trace(&self) -> PathBuf {
        self.join("traces/head.json")
    }
    pub fn generation_report(&self) -> PathBuf {
        self.join("reports/generation_report.json")
    }
    pub fn quality_report(&self) -> PathBuf {
        self.join("reports/quality_report.json")
    }
    pub fn projection(&self) -> PathBuf {
        self.join("reports/projection.csv")
    }
    pub fn metrics(&self, name: &str) -> PathBuf {
        self.join(&format!("reports/metrics_{name}.json"))
    }
    pub fn metrics_csv(&self, name: &str) -> PathBuf {
        self.join(&format!("reports/metrics_{name}.csv"))
    }
    pub fn comparison(&self) -> PathBuf {
        self.join("reports/comparison.json")
    }
    pub fn predictions(&self) -> PathBuf {
        self.join("reports/predictions.csv")
    }

    /// Path relative to the root, for the manifest.
    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

pub(crate) fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    require(path)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Self-describing model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub config_hash: String,
    pub model: T,
}

impl<T> Checkpoint<T> {
    pub fn new(kind: &str, config_hash: &str, model: T) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: kind.into(),
            config_hash: config_hash.into(),
            model,
        }
    }
}

pub fn save_checkpoint<T: Serialize>(path: &Path, kind: &str, config_hash: &str, model: &T) -> Result<()> {
    write_json(path, &Checkpoint::new(kind, config_hash, model))
}

pub fn load_checkpoint<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let ckpt: Checkpoint<T> = read_json(path)?;
    if ckpt.format != CHECKPOINT_FORMAT || ckpt.kind != kind {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("expected a {kind} checkpoint, found {} `{}`", ckpt.format, ckpt.kind),
        });
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("unsupported checkpoint version {}", ckpt.version),
        });
    }
    Ok(ckpt.model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub config_hash: String,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: PipelineConfig,
    /// Latest record per stage, in pipeline order of first execution.
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config_hash: config.hash(),
            config: config.clone(),
            stages: Vec::new(),
        }
    }

    /// Loads the manifest in `layout`, or starts a fresh one. The config
    /// snapshot always reflects the most recent invocation.
    pub fn open(layout: &RunLayout, config: &PipelineConfig) -> Result<Self> {
        let path = layout.manifest();
        let mut manifest = if path.is_file() {
            read_json::<RunManifest>(&path)?
        } else {
            Self::new(config)
        };
        manifest.seed = config.seed;
        manifest.config_hash = config.hash();
        manifest.config = config.clone();
        manifest.tool_version = env!("CARGO_PKG_VERSION").into();
        Ok(manifest)
    }

    pub fn record(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|r| r.stage == record.stage) {
            Some(slot) => *slot = record,
            None => self.stages.push(record),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == name)
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &str> {
        self.stages.iter().flat_map(|r| r.artifacts.iter().map(String::as_str))
    }

    pub fn save(&self, layout: &RunLayout) -> Result<()> {
        write_json(&layout.manifest(), self)
    }
}
