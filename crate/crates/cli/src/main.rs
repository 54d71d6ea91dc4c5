mod cmd;
mod config;
mod error;
mod lock;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "rgb2dem",
    about = "RGB-to-DEM translation pipeline: site mining, dataset build, curation, adversarial training, evaluation"
)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(short, long, default_value = "pipeline.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine cloud-free site candidates and select cluster representatives.
    Sites,
    /// Build the paired RGB/DEM tile corpus and write the manifest.
    Build,
    /// Flag low-diversity pairs and assign train/val/test splits.
    Curate,
    /// Train the model; stage 2 resumes from stage 1 with optional SSIM refinement.
    Train {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        stage: u32,
        /// Refinement threshold; overrides the config value for stage 2.
        #[arg(long = "ssim-filter")]
        ssim_filter: Option<f64>,
    },
    /// Score the test split with a trained checkpoint.
    Eval {
        /// Checkpoint stage to evaluate; defaults to the latest available.
        #[arg(long)]
        stage: Option<u32>,
    },
    /// Summarize all evaluated runs into one comparison table.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match PipelineConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("rgb2dem: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Sites => cmd::sites::run(&config),
        Command::Build => cmd::build::run(&config),
        Command::Curate => cmd::curate::run(&config),
        Command::Train { stage, ssim_filter } => cmd::train::run(&config, stage, ssim_filter),
        Command::Eval { stage } => cmd::eval::run(&config, stage),
        Command::Report => cmd::report::run(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rgb2dem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
