use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use latentdiff::evaluation::REGIONS;
use latentdiff::pipeline::{
    parse_config, resolve_out_dir, run_pipeline, run_stage, Evaluation, PipelineConfig, Stage, StageOptions,
    OUT_DIR_ENV,
};
use latentdiff::Error;

#[derive(Parser)]
#[command(
    name = "latentdiff",
    version,
    about = "Feature-space diffusion augmentation for imbalanced regression"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config document; absent keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory (overrides the config and the environment).
    #[arg(long, global = true, help = format!("Run directory; falls back to the config, then ${OUT_DIR_ENV}, then runs/latest"))]
    out_dir: Option<PathBuf>,

    /// Drop unknown config keys with a warning instead of failing.
    #[arg(long, global = true)]
    permissive: bool,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Build the train/test split and bin spec.
    GenData,
    /// Train the encoder + head baseline.
    TrainVanilla,
    /// Dump encoder features of the training set.
    Extract,
    /// Train the conditional denoiser on the extracted features.
    TrainDiffusion,
    /// Allocate the budget, sample, gate and analyse synthetic features.
    Generate,
    /// Retrain the head on real plus synthetic features.
    Augment,
    /// Score both models on the test split.
    Evaluate {
        /// Only (re)write the metric reports.
        #[arg(long)]
        report_only: bool,
    },
    /// Every stage in order.
    RunAll,
}

fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut config = match &common.config {
        Some(path) => parse_config(path, common.permissive)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn print_summary(eval: &Evaluation) {
    let mut out = std::io::stdout().lock();
    // a closed pipe (`| head`) is not an error worth reporting
    let _ = writeln!(
        out,
        "{:<8} {:>7} {:>10} {:>10} {:>9}",
        "region", "count", "vanilla", "augmented", "change"
    );
    for region in REGIONS {
        let count = eval.vanilla.count(region);
        let key = format!("mae.{region}");
        let (a, b) = (eval.vanilla.get(&key), eval.augmented.get(&key));
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let change = eval
            .comparison
            .find("mae", region)
            .and_then(|d| d.relative_improvement)
            .map_or("-".to_string(), |r| format!("{r:+.1}%"));
        let _ = writeln!(out, "{region:<8} {count:>7} {:>10} {:>10} {change:>9}", fmt(a), fmt(b));
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(&cli.common)?;
    let out_dir = resolve_out_dir(cli.common.out_dir.as_deref(), &config);
    let stage = match cli.command {
        Command::RunAll => {
            let summary = run_pipeline(&config, &out_dir)?;
            print_summary(&summary.evaluation);
            println!("artifacts in {}", out_dir.display());
            return Ok(());
        }
        Command::GenData => Stage::GenData,
        Command::TrainVanilla => Stage::TrainVanilla,
        Command::Extract => Stage::Extract,
        Command::TrainDiffusion => Stage::TrainDiffusion,
        Command::Generate => Stage::Generate,
        Command::Augment => Stage::Augment,
        Command::Evaluate { report_only } => {
            let options = StageOptions { report_only };
            if let Some(eval) = run_stage(Stage::Evaluate, &config, &out_dir, options)? {
                print_summary(&eval);
            }
            return Ok(());
        }
    };
    run_stage(stage, &config, &out_dir, StageOptions::default())?;
    println!("{stage} done; artifacts in {}", out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::ConfigValue { .. } | Error::UnknownKey(_) => 2,
                _ => 1,
            })
        }
    }
}
