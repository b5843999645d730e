//! `mcmmf`: simulate, calibrate and reconstruct with the fiber-bundle
//! spectral imager pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Pipeline {
        context: String,
        #[source]
        source: mcmmf::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn pipeline(context: impl Into<String>) -> impl FnOnce(mcmmf::Error) -> Self {
        let context = context.into();
        move |source| match source {
            mcmmf::Error::Io(e) => CliError::Io {
                path: PathBuf::from(context),
                source: e,
            },
            source => CliError::Pipeline { context, source },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mcmmf",
    version,
    about = "Multicore multimode fiber spectral imager pipeline"
)]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Sampling,
    Sparsity,
    Noise,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a white-light frame, one calibration frame per grid
    /// wavelength and a scene frame with its ground truth into OUT.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: `paths.output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Lines per core in the random scene.
        #[arg(long, default_value_t = 1)]
        n_lambda: usize,
        /// Render a letter on one channel instead of random spectra.
        #[arg(long)]
        glyph: Option<char>,
        /// Channel of the letter.
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Locate fiber cores in a frame and write a core map as JSON.
    FindCores {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        eps: f64,
        #[arg(long, default_value_t = 13)]
        min_pts: usize,
        /// Intensity threshold in counts (default: Otsu).
        #[arg(long)]
        threshold: Option<u16>,
        #[arg(long, default_value_t = 20)]
        aoi_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an STM from a directory of `frame_<index>_<wavelength>.pgm`.
    Calibrate {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        cores: PathBuf,
        #[arg(long)]
        pixels_per_core: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover per-core spectra from a scene frame and write them as CSV.
    Reconstruct {
        #[arg(long)]
        stm: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        /// Keep `round(ratio·X)` random rows per core.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long, default_value_t = mcmmf::solver::DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sampling, sparsity or noise sweep and write its CSV.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (default: `paths.output/sweep_<kind>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the 16-letter composite scene; writes one PGM per
    /// letter and `crosstalk.csv` into OUT.
    Composite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Simulate {
            config,
            out,
            n_lambda,
            glyph,
            channel,
        } => commands::simulate(&config, out, seed, n_lambda, glyph, channel),
        Command::FindCores {
            frame,
            eps,
            min_pts,
            threshold,
            aoi_size,
            out,
        } => commands::find_cores(&frame, eps, min_pts, threshold, aoi_size, &out),
        Command::Calibrate {
            frames,
            cores,
            pixels_per_core,
            out,
        } => commands::calibrate(&frames, &cores, pixels_per_core, &out),
        Command::Reconstruct {
            stm,
            frame,
            ratio,
            tolerance,
            max_iterations,
            out,
        } => commands::reconstruct(
            &stm,
            &frame,
            ratio,
            seed.unwrap_or(1),
            mcmmf::solver::SolverOptions {
                tolerance,
                max_iterations,
            },
            &out,
        ),
        Command::Sweep { kind, config, out } => commands::sweep(kind, &config, out, seed),
        Command::Composite { config, out } => commands::composite(&config, out, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
