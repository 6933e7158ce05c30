use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ifp_cli::commands;
use ifp_cli::config::{load_config, PipelineConfig};
use ifp_cli::Result;

/// Incoherent Fourier ptychography: speckle-scan simulation, translation
/// position extraction, and super-resolution reconstruction.
#[derive(Parser)]
#[command(name = "ifp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a speckle-scan acquisition: frames, ground-truth positions,
    /// and reference images.
    Simulate {
        /// JSON configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the configuration's noise seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract per-frame speckle translations from raw frames.
    Extract {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding frame_*.ifpm files.
        #[arg(long)]
        frames_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Frame whose shift defines the origin.
        #[arg(long)]
        reference_index: Option<usize>,
    },
    /// Reconstruct object and illumination pattern from frames plus
    /// positions.
    Reconstruct {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        frames_dir: PathBuf,
        /// Positions CSV (extracted or ground truth).
        #[arg(long)]
        positions: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Let object and pattern estimates go negative.
        #[arg(long)]
        no_clamp: bool,
    },
    /// simulate, extract, and reconstruct in one output directory.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reference_index: Option<usize>,
        #[arg(long)]
        no_clamp: bool,
    },
    /// Mean position error as a function of noise level.
    SweepNoise {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a reconstruction against the ground-truth object.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Reconstructed object (IFPM).
        #[arg(long)]
        recon: PathBuf,
        /// Ground-truth object (IFPM).
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn configuration(path: Option<&PathBuf>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(path) => load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out_dir,
            seed,
        } => {
            let config = configuration(config.as_ref(), seed)?;
            commands::cmd_simulate(&config, &out_dir)
        }
        Command::Extract {
            config,
            frames_dir,
            out_dir,
            reference_index,
        } => {
            let config = configuration(config.as_ref(), None)?;
            commands::cmd_extract(&config, &frames_dir, &out_dir, reference_index)
        }
        Command::Reconstruct {
            config,
            frames_dir,
            positions,
            out_dir,
            no_clamp,
        } => {
            let config = configuration(config.as_ref(), None)?;
            commands::cmd_reconstruct(&config, &frames_dir, &positions, &out_dir, no_clamp)
        }
        Command::Pipeline {
            config,
            out_dir,
            seed,
            reference_index,
            no_clamp,
        } => {
            let config = configuration(config.as_ref(), seed)?;
            commands::cmd_pipeline(&config, &out_dir, reference_index, no_clamp)
        }
        Command::SweepNoise {
            config,
            out_dir,
            seed,
        } => {
            let config = configuration(config.as_ref(), seed)?;
            commands::cmd_sweep_noise(&config, &out_dir)
        }
        Command::Evaluate {
            config,
            recon,
            truth,
            out_dir,
        } => {
            let config = configuration(config.as_ref(), None)?;
            commands::cmd_evaluate(&config, &recon, &truth, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
