use clap::{Parser, Subcommand};
use soelab::config::ExperimentConfig;
use soelab::stages::{run_pipeline, run_stage, StageOutcome};
use soelab::store::RunStore;
use soelab::{report, studies};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "soelab", version, about = "Closed-loop imitation learning laboratory")]
struct Cli {
    /// Artifact store directory. Created on first use and locked to the
    /// config it was created with.
    #[arg(long, global = true, default_value = "store")]
    store: PathBuf,

    /// Experiment config (TOML). Only consulted when the store is new.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Rayon worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the four scenario splits.
    GenScenarios,
    /// Roll out the scripted expert on the train split and build the dataset.
    Collect,
    /// Train the seed-diverse behavior-cloning runs.
    Train,
    /// Score every epoch on the validation split and select checkpoints.
    Validate,
    /// Run every stage through the held-out test and the report.
    Pipeline,
    /// Re-enumerate the pair matrix at several alternation periods.
    SweepPeriod {
        /// Comma-separated periods, each >= 2.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,6,8")]
        periods: Vec<u64>,
    },
    /// Compare cross-run combination against top epochs of a single run.
    AblateSameRun,
    /// Enumerate cyclic schedules over three experts.
    MoreExperts,
    /// Regenerate the markdown report from the current store contents.
    Report,
}

fn load_config(path: &Option<PathBuf>) -> soelab_core::Result<Option<ExperimentConfig>> {
    // None lets an existing store keep its saved config; a fresh store
    // falls back to the defaults.
    match path {
        None => Ok(None),
        Some(p) => Ok(Some(ExperimentConfig::load(p)?)),
    }
}

fn run(cli: Cli) -> soelab_core::Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| soelab_core::Error::invalid("worker pool", e.to_string()))?;
    }
    let mut store = RunStore::open(&cli.store, load_config(&cli.config)?)?;
    let describe = |stage: &str, outcome: StageOutcome| match outcome {
        StageOutcome::Ran => log::info!("stage {stage}: done"),
        StageOutcome::Cached => log::info!("stage {stage}: cached"),
    };
    match cli.command {
        Command::GenScenarios => describe("scenarios", run_stage(&mut store, "scenarios")?),
        Command::Collect => describe("collect", run_stage(&mut store, "collect")?),
        Command::Train => describe("train", run_stage(&mut store, "train")?),
        Command::Validate => describe("validate", run_stage(&mut store, "validate")?),
        Command::Pipeline => {
            run_pipeline(&mut store)?;
            log::info!("pipeline complete");
        }
        Command::SweepPeriod { periods } => {
            let sweep = studies::sweep_period(&mut store, &periods)?;
            log::info!(
                "period sweep over {:?}: {} rows",
                periods,
                sweep.rows.len()
            );
        }
        Command::AblateSameRun => {
            let study = studies::ablate_same_run(&mut store)?;
            for row in &study.rows {
                log::info!(
                    "{}: lambda cross {:.4} vs same-run {:.4}",
                    row.mode.name(),
                    row.lambda_cross,
                    row.lambda_same
                );
            }
        }
        Command::MoreExperts => {
            let study = studies::more_experts(&mut store)?;
            log::info!("{} cyclic orderings scored", study.rows.len());
        }
        Command::Report => {
            let outputs = report::write_report(&store)?;
            store.record_stage("report", &outputs)?;
            log::info!("report written: {}", outputs.join(", "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
