use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csi_denoise::evaluation::ReferenceMode;
use csi_denoise::pipeline::{cmd_evaluate, cmd_generate, cmd_train, EvaluateOptions, RunConfig, StageSelection};
use csi_denoise::Error;

/// Noisy CSI feedback pipeline: generate data, train, evaluate.
#[derive(Debug, Parser)]
#[command(name = "csifb", version)]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the train/val/test datasets.
    Generate {
        /// Run configuration (TOML).
        config: PathBuf,
    },
    /// Run one training stage, or all of them in order.
    Train {
        config: PathBuf,
        /// pretrain-ae, pretrain-dn, joint or all.
        #[arg(long, default_value = "all")]
        stage: String,
    },
    /// Evaluate trained bundles over the configured SNR sweep.
    Evaluate {
        config: PathBuf,
        /// Stage name or checkpoint file (defaults to the joint stage).
        #[arg(long)]
        checkpoint: Option<String>,
        /// Bypass the DNNet.
        #[arg(long)]
        no_dnnet: bool,
        /// truncated-reference or full-reference.
        #[arg(long)]
        reference_mode: Option<String>,
        /// Report file stem.
        #[arg(long)]
        name: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate { config } => {
            let config = RunConfig::load(&config)?;
            let (_, summary) = cmd_generate(&config)?;
            print!("{summary}");
        }
        Command::Train { config, stage } => {
            let selection = StageSelection::parse(&stage)?;
            let config = RunConfig::load(&config)?;
            for m in cmd_train(&config, selection)? {
                println!(
                    "{} gamma={} final_loss={} val_nmse_db={} best_epoch={} -> {}",
                    m.stage.name(),
                    m.gamma,
                    m.result.final_loss,
                    m.result.val_nmse_db,
                    m.result.best_epoch,
                    m.checkpoint
                );
            }
        }
        Command::Evaluate {
            config,
            checkpoint,
            no_dnnet,
            reference_mode,
            name,
        } => {
            let reference_mode = reference_mode.as_deref().map(ReferenceMode::parse).transpose()?;
            let config = RunConfig::load(&config)?;
            let options = EvaluateOptions {
                checkpoint,
                no_dnnet,
                reference_mode,
                name,
            };
            let (_, paths) = cmd_evaluate(&config, &options)?;
            for path in paths {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::FAILURE
        }
    }
}
