//! Pipeline stages. Each stage reads its inputs from the run directory and
//! writes its outputs back, so a staged run and `run_all` produce the same
//! files.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::artifacts::{
    ensure_parent, load_checkpoint, read_json, require, save_checkpoint, write_json, RunLayout, RunManifest,
    StageRecord, StageStatus,
};
use super::config::{DataSource, PipelineConfig};
use crate::analytics::{quality_report, write_projection_csv};
use crate::data::synthetic::{make_with_stream, SYNTHETIC_Y_MAX, SYNTHETIC_Y_MIN};
use crate::data::{load_csv, BinSpec, CsvSchema, LabeledFeatureSet, ShotPartition};
use crate::diffusion::{train_diffusion, DiffusionModel};
use crate::error::{Error, Result};
use crate::evaluation::{compare_reports, compute_metrics, DeltaReport, MetricsReport};
use crate::generation::{
    allocate_budget, fit_gate_for_model, generate_augmentation, priority_scores, track_errors, AllocationPlan,
    GenerationReport, PriorityState,
};
use crate::numeric::SeededRng;
use crate::regression::{extract_features, train_head_augmented, train_vanilla, RegressorModel};

const VANILLA: &str = "vanilla";
const AUGMENTED: &str = "augmented";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    GenData,
    TrainVanilla,
    Extract,
    TrainDiffusion,
    Generate,
    Augment,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::GenData,
        Stage::TrainVanilla,
        Stage::Extract,
        Stage::TrainDiffusion,
        Stage::Generate,
        Stage::Augment,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainVanilla => "train-vanilla",
            Stage::Extract => "extract",
            Stage::TrainDiffusion => "train-diffusion",
            Stage::Generate => "generate",
            Stage::Augment => "augment",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageOptions {
    /// `evaluate` only: write metric reports and nothing else.
    pub report_only: bool,
}

/// Priorities and the resulting plan, persisted by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityArtifact {
    pub budget: usize,
    pub state: PriorityState,
    pub plan: AllocationPlan,
}

/// What `evaluate` produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub vanilla: MetricsReport,
    pub augmented: MetricsReport,
    pub comparison: DeltaReport,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub evaluation: Evaluation,
    pub generation: GenerationReport,
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    layout: &'a RunLayout,
    hash: String,
    written: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn wrote(&mut self, path: PathBuf) {
        self.written.push(path);
    }
}

fn load_set(path: &Path) -> Result<LabeledFeatureSet> {
    require(path)?;
    load_csv(path, CsvSchema::default())
}

fn load_bins(layout: &RunLayout) -> Result<BinSpec> {
    read_json(&layout.bins())
}

/// Seeded hold-out split with at least one row on each side.
fn split(set: &LabeledFeatureSet, fraction: f64, seed: u64) -> Result<(LabeledFeatureSet, LabeledFeatureSet)> {
    if set.len() < 2 {
        return Err(Error::value("data.train_csv", "need at least two rows to split"));
    }
    let n_test = ((set.len() as f64 * fraction).round() as usize).clamp(1, set.len() - 1);
    let order = SeededRng::substream(seed, "split", 0).permutation(set.len());
    let (test_idx, train_idx) = order.split_at(n_test);
    Ok((set.select(train_idx), set.select(test_idx)))
}

fn bin_range(config: &PipelineConfig, train: &LabeledFeatureSet, test: &LabeledFeatureSet) -> Result<(f64, f64)> {
    let observed = || -> Result<(f64, f64)> {
        let (a, b) = train.target_range().ok_or_else(|| Error::shape("empty training set"))?;
        let (c, d) = test.target_range().unwrap_or((a, b));
        Ok((a.min(c), b.max(d)))
    };
    let (lo, hi) = match config.data.source {
        DataSource::Synthetic => (SYNTHETIC_Y_MIN, SYNTHETIC_Y_MAX),
        DataSource::Csv => observed()?,
    };
    Ok((config.data.y_min.unwrap_or(lo), config.data.y_max.unwrap_or(hi)))
}

fn gen_data(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.config;
    let (train, test) = match cfg.data.source {
        DataSource::Synthetic => {
            let base = cfg.data.synthetic(cfg.seed);
            let train = make_with_stream(&base, "synthetic-data")?.with_name("train");
            let balanced = crate::data::SyntheticConfig {
                n: cfg.data.test_n,
                decay: 1.0,
                ..base
            };
            let test = make_with_stream(&balanced, "test-data")?.with_name("test");
            (train, test)
        }
        DataSource::Csv => {
            let path = cfg.data.train_csv.as_ref().expect("validated");
            let all = load_csv(path, CsvSchema::default())?;
            match &cfg.data.test_csv {
                Some(test_path) => {
                    let schema = CsvSchema {
                        features: Some(all.width()),
                        ..Default::default()
                    };
                    (all, load_csv(test_path, schema)?)
                }
                None => split(&all, cfg.data.test_fraction, cfg.seed)?,
            }
        }
    };
    let (lo, hi) = bin_range(cfg, &train, &test)?;
    let bins = BinSpec::new(lo, hi, cfg.data.bins)?;
    bins.assign(&train.targets)?;
    bins.assign(&test.targets)?;

    for (set, path) in [(&train, ctx.layout.train_data()), (&test, ctx.layout.test_data())] {
        ensure_parent(&path)?;
        set.save_csv(&path)?;
        ctx.wrote(path);
    }
    write_json(&ctx.layout.bins(), &bins)?;
    ctx.wrote(ctx.layout.bins());
    log::info!(
        "data: {} train rows, {} test rows, width {}, bins {} over [{lo}, {hi}]",
        train.len(),
        test.len(),
        train.width(),
        bins.bins
    );
    Ok(())
}

fn stage_train_vanilla(ctx: &mut Ctx) -> Result<()> {
    let train = load_set(&ctx.layout.train_data())?;
    let (model, trace) = train_vanilla(&train, &ctx.config.regressor, ctx.config.seed)?;
    log::info!("vanilla: final mse {:?}", trace.epoch_losses.last());
    save_checkpoint(&ctx.layout.vanilla_model(), "regressor", &ctx.hash, &model)?;
    write_json(&ctx.layout.vanilla_trace(), &trace)?;
    ctx.wrote(ctx.layout.vanilla_model());
    ctx.wrote(ctx.layout.vanilla_trace());
    Ok(())
}

fn load_vanilla(layout: &RunLayout) -> Result<RegressorModel> {
    load_checkpoint(&layout.vanilla_model(), "regressor")
}

fn stage_extract(ctx: &mut Ctx) -> Result<()> {
    let model = load_vanilla(ctx.layout)?;
    let train = load_set(&ctx.layout.train_data())?;
    let feats = extract_features(&model, &train)?;
    let path = ctx.layout.train_features();
    ensure_parent(&path)?;
    feats.save_csv(&path)?;
    ctx.wrote(path);
    Ok(())
}

fn stage_train_diffusion(ctx: &mut Ctx) -> Result<()> {
    let feats = load_set(&ctx.layout.train_features())?;
    let bins = load_bins(ctx.layout)?;
    let (model, trace) = train_diffusion(&feats, &bins, &ctx.config.diffusion_config())?;
    log::info!("diffusion: final loss {:?}", trace.epoch_losses.last());
    save_checkpoint(&ctx.layout.diffusion_model(), "diffusion", &ctx.hash, &model)?;
    write_json(&ctx.layout.diffusion_trace(), &trace)?;
    ctx.wrote(ctx.layout.diffusion_model());
    ctx.wrote(ctx.layout.diffusion_trace());
    Ok(())
}

fn stage_generate(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.config;
    let layout = ctx.layout;
    let vanilla = load_vanilla(layout)?;
    let diffusion: DiffusionModel = load_checkpoint(&layout.diffusion_model(), "diffusion")?;
    let train = load_set(&layout.train_data())?;
    let feats = load_set(&layout.train_features())?;
    let bins = load_bins(layout)?;

    let errors = track_errors(&vanilla.predict_from_features(&feats.features)?, &train.targets, &bins)?;
    let state = priority_scores(
        &errors.mean_abs_error,
        &errors.counts,
        cfg.priority.lambda,
        cfg.priority.normalize_errors,
    )?;
    let budget = cfg.mix.epoch_demand(feats.len(), cfg.head.batch_size);
    let plan = allocate_budget(&state.probabilities, budget, cfg.priority.mode)?;
    let gate = if cfg.gate.enabled {
        Some(fit_gate_for_model(&diffusion, &feats, &bins, &cfg.gate)?)
    } else {
        None
    };
    let aug = generate_augmentation(&diffusion, &bins, &plan, gate.as_ref(), &cfg.generate, cfg.seed)?;
    log::info!(
        "generate: {} of {} synthetic rows accepted",
        aug.report.total_achieved,
        aug.report.total_quota
    );

    write_json(&layout.priority(), &PriorityArtifact { budget, state, plan })?;
    ctx.wrote(layout.priority());
    let syn_path = layout.synthetic();
    ensure_parent(&syn_path)?;
    aug.set.save_csv_with_origin(&syn_path, "synthetic")?;
    ctx.wrote(syn_path);
    write_json(&layout.generation_report(), &aug.report)?;
    ctx.wrote(layout.generation_report());

    let quality = quality_report(&feats, &aug.set, &bins, &cfg.analytics, cfg.seed)?;
    write_json(&layout.quality_report(), &quality)?;
    ctx.wrote(layout.quality_report());
    write_projection_csv(layout.projection(), &feats, &aug.set)?;
    ctx.wrote(layout.projection());
    Ok(())
}

fn stage_augment(ctx: &mut Ctx) -> Result<()> {
    let vanilla = load_vanilla(ctx.layout)?;
    let feats = load_set(&ctx.layout.train_features())?;
    let syn_path = ctx.layout.synthetic();
    require(&syn_path)?;
    let schema = CsvSchema {
        features: Some(feats.width()),
        allow_empty: true,
        ..Default::default()
    };
    let synthetic = load_csv(&syn_path, schema)?;
    let (model, trace) = train_head_augmented(
        &vanilla,
        &feats,
        &synthetic,
        &ctx.config.mix,
        &ctx.config.head,
        ctx.config.seed,
    )?;
    if trace.resampled_epochs > 0 {
        log::info!("augment: synthetic rows reused in {} epochs", trace.resampled_epochs);
    }
    save_checkpoint(&ctx.layout.augmented_model(), "regressor", &ctx.hash, &model)?;
    write_json(&ctx.layout.head_trace(), &trace)?;
    ctx.wrote(ctx.layout.augmented_model());
    ctx.wrote(ctx.layout.head_trace());
    Ok(())
}

fn stage_evaluate(ctx: &mut Ctx, options: StageOptions) -> Result<Evaluation> {
    let layout = ctx.layout;
    let vanilla = load_vanilla(layout)?;
    let augmented: RegressorModel = load_checkpoint(&layout.augmented_model(), "regressor")?;
    let train = load_set(&layout.train_data())?;
    let test = load_set(&layout.test_data())?;
    let bins = load_bins(layout)?;
    let partition = ShotPartition::from_counts(&bins.counts(&train.targets)?);

    let mut outputs = Vec::new();
    for (name, model) in [(VANILLA, &vanilla), (AUGMENTED, &augmented)] {
        let pred = model.predict(&test.features)?;
        let mut report = compute_metrics(&pred, &test.targets, &partition, &bins)?;
        report.name = name.into();
        report.seed = ctx.config.seed;
        report.config_hash = ctx.hash.clone();
        let json = layout.metrics(name);
        ensure_parent(&json)?;
        std::fs::write(&json, report.to_json_pretty()? + "\n")?;
        std::fs::write(layout.metrics_csv(name), report.to_csv())?;
        ctx.wrote(json);
        ctx.wrote(layout.metrics_csv(name));
        outputs.push((report, pred));
    }
    let (aug_report, aug_pred) = outputs.pop().expect("two reports");
    let (van_report, van_pred) = outputs.pop().expect("two reports");
    let comparison = compare_reports(&van_report, &aug_report)?;
    write_json(&layout.comparison(), &comparison)?;
    ctx.wrote(layout.comparison());

    if !options.report_only {
        let path = layout.predictions();
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "target,vanilla,augmented")?;
        for ((y, a), b) in test.targets.iter().zip(&van_pred).zip(&aug_pred) {
            writeln!(out, "{y},{a},{b}")?;
        }
        out.flush()?;
        ctx.wrote(path);
    }
    Ok(Evaluation {
        vanilla: van_report,
        augmented: aug_report,
        comparison,
    })
}

fn dispatch(stage: Stage, ctx: &mut Ctx, options: StageOptions) -> Result<Option<Evaluation>> {
    match stage {
        Stage::GenData => gen_data(ctx)?,
        Stage::TrainVanilla => stage_train_vanilla(ctx)?,
        Stage::Extract => stage_extract(ctx)?,
        Stage::TrainDiffusion => stage_train_diffusion(ctx)?,
        Stage::Generate => stage_generate(ctx)?,
        Stage::Augment => stage_augment(ctx)?,
        Stage::Evaluate => return stage_evaluate(ctx, options).map(Some),
    }
    Ok(None)
}

/// Runs one stage in `out_dir`, recording it in the manifest. Failures are
/// recorded too and come back wrapped with the stage name.
pub fn run_stage(
    stage: Stage,
    config: &PipelineConfig,
    out_dir: &Path,
    options: StageOptions,
) -> Result<Option<Evaluation>> {
    config.validate()?;
    let layout = RunLayout::new(out_dir);
    std::fs::create_dir_all(out_dir)?;
    let report_only = stage == Stage::Evaluate && options.report_only;
    let mut ctx = Ctx {
        config,
        layout: &layout,
        hash: config.hash(),
        written: Vec::new(),
    };
    let started = Instant::now();
    log::info!("stage {stage} starting");
    let result = dispatch(stage, &mut ctx, options);
    let seconds = started.elapsed().as_secs_f64();
    if report_only {
        return result.map_err(|e| Error::Stage {
            stage: stage.name().into(),
            source: Box::new(e),
        });
    }

    let mut manifest = RunManifest::open(&layout, config)?;
    write_json(&layout.config(), config)?;
    let mut artifacts: Vec<String> = ctx.written.iter().map(|p| layout.relative(p)).collect();
    artifacts.dedup();
    let record = StageRecord {
        stage: stage.name().into(),
        status: if result.is_ok() {
            StageStatus::Ok
        } else {
            StageStatus::Failed
        },
        seconds,
        config_hash: ctx.hash.clone(),
        artifacts,
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    manifest.record(record);
    manifest.save(&layout)?;
    log::info!("stage {stage} finished in {seconds:.1}s");
    result.map_err(|e| Error::Stage {
        stage: stage.name().into(),
        source: Box::new(e),
    })
}

/// Runs `stages` in order, stopping at the first failure.
pub fn run_stages(config: &PipelineConfig, out_dir: &Path, stages: &[Stage]) -> Result<Option<Evaluation>> {
    let mut last = None;
    for &stage in stages {
        if let Some(eval) = run_stage(stage, config, out_dir, StageOptions::default())? {
            last = Some(eval);
        }
    }
    Ok(last)
}

/// The full loop: data, vanilla baseline, features, diffusion, generation,
/// augmented head and both evaluations.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<RunSummary> {
    let evaluation = run_stages(config, out_dir, &Stage::ALL)?.expect("evaluate runs last");
    let generation = read_json(&RunLayout::new(out_dir).generation_report())?;
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        evaluation,
        generation,
    })
}
