use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rfdeep_cli::pipeline::{run_pipeline, run_step};
use rfdeep_cli::{CliError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "rfdeep", version, about = "Scan-level OOD detection from region-aggregated encoder features")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on worker threads. Does not change any output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override `protocol.base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic cohorts and their manifest.
    Gen,
    /// Run the toy encoder and write feature pyramids.
    Encode,
    /// Extract deep and radiomics feature tables.
    Extract,
    /// Compute the training-free confidence scores.
    Score,
    /// Fit RF-Deep and RF-Radiomics on the full cohorts.
    Train,
    /// Repeated-split evaluation of all methods.
    Eval,
    /// Per-stage RF-Deep evaluation.
    Ablate,
    /// SHAP values and feature importances for the trained models.
    Explain,
    /// Write the summary table.
    Report,
    /// gen → encode → extract → score → train → eval → report, skipping
    /// steps whose stamps match.
    Pipeline {
        /// Rerun every step.
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.protocol.base_seed = s;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let stage = match cli.command {
            Command::Gen => Stage::Gen,
            Command::Encode => Stage::Encode,
            Command::Extract => Stage::Extract,
            Command::Score => Stage::Score,
            Command::Train => Stage::Train,
            Command::Eval => Stage::Eval,
            Command::Ablate => Stage::Ablate,
            Command::Explain => Stage::Explain,
            Command::Report => Stage::Report,
            Command::Pipeline { force } => return run_pipeline(&cfg, force).map(|_| ()),
        };
        run_step(&cfg, stage)
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
