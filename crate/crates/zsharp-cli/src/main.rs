//! Batch-oriented command-line front end: configure runs, generate data,
//! execute sweeps, comparisons and convergence diagnostics, emit CSV
//! artifacts and manifests.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
//! 4 partial sweep/comparison failure, 5 violated convergence bound.

mod commands;
mod overrides;

use clap::{Args, Parser, Subcommand};
use overrides::ConfigOverrides;
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;
pub const EXIT_BOUND: u8 = 5;
pub const EXIT_IO: u8 = 1;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct CliFailure {
    pub code: u8,
    pub message: String,
}

#[derive(Parser, Debug)]
#[command(
    name = "zsharp",
    version,
    about = "Z-score filtered sharpness-aware minimization: training runs, sweeps, comparisons and convergence checks",
    after_help = "Config keys are dot-paths shared by config files (key = value lines, # comments), \
                  the override flags above, and run manifests. Unknown keys are errors."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunIo {
    /// Config file of `key = value` lines; flags override file values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (defaults to $ZSHARP_OUT).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one training configuration and write metrics.csv plus a manifest.
    Train {
        #[command(flatten)]
        io: RunIo,
    },
    /// Train the qp cross product over seeds and aggregate mean/std per qp.
    Sweep {
        #[command(flatten)]
        io: RunIo,
        /// Comma-separated qp values, e.g. 0.95,0.9,0.85,0.8,0.75.
        #[arg(long, value_name = "LIST")]
        qp: String,
        /// Comma-separated training seeds, e.g. 1,2,3.
        #[arg(long, value_name = "LIST")]
        seeds: String,
        /// Cap on parallel worker threads [default: all cores].
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
    },
    /// Same-seed paired runs of base/sam/zsharp with aggregate statistics.
    Compare {
        #[command(flatten)]
        io: RunIo,
        /// Comma-separated methods to compare [default: base,sam,zsharp].
        #[arg(long, value_name = "LIST", default_value = "base,sam,zsharp")]
        methods: String,
        /// Comma-separated training seeds, e.g. 1,2,3.
        #[arg(long, value_name = "LIST")]
        seeds: String,
        /// Cap on parallel worker threads [default: all cores].
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
    },
    /// Run the convergence diagnostics on the diag(1, beta) quadratic.
    Verify {
        /// Smoothness constant; the problem is diag(1, beta) [default: 10].
        #[arg(long, default_value_t = 10.0, value_name = "BETA")]
        beta: f64,
        /// Step size; omit to run the default grid 1/(4b), 1/(8b).
        #[arg(long, value_name = "ETA")]
        eta: Option<f64>,
        /// Ascent radius; omit to run the default grid 1/(2b), 1/(4b).
        #[arg(long, value_name = "R")]
        r: Option<f64>,
        /// Filter percentile; omit to run the default grid 0, 0.5, 0.95.
        #[arg(long, value_name = "QP")]
        qp: Option<f64>,
        /// Bound-check horizon in steps [default: 200].
        #[arg(long, default_value_t = 200, value_name = "T")]
        steps: usize,
        /// Diminishing-step checkpoint; repeatable [default: 100 1000 10000].
        #[arg(long = "T", value_name = "T")]
        checkpoints: Vec<usize>,
        /// Convergence threshold on the minimum squared gradient norm [default: 1e-4].
        #[arg(long, default_value_t = 1e-4, value_name = "X")]
        threshold: f64,
        /// Start point for the diminishing-step run [default: 0.005,0.005].
        #[arg(long, default_value = "0.005,0.005", value_name = "X,Y")]
        w0: String,
    },
    /// Generate a synthetic dataset and write it as CSV.
    GenData {
        /// Generator name: two-moons, blobs or spirals.
        generator: String,
        /// Number of samples [default: 400].
        #[arg(long, default_value_t = 400, value_name = "N")]
        n: usize,
        /// Noise standard deviation [default: 0.1].
        #[arg(long, default_value_t = 0.1, value_name = "STD")]
        noise: f64,
        /// Generator seed [default: 7].
        #[arg(long, default_value_t = 7, value_name = "SEED")]
        seed: u64,
        /// Number of blob centers, blobs only [default: 3].
        #[arg(long, default_value_t = 3, value_name = "K")]
        centers: usize,
        /// Output CSV file.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliFailure> {
    match cli.command {
        Command::Train { io } => commands::cmd_train(io.config, &io.overrides, io.out),
        Command::Sweep {
            io,
            qp,
            seeds,
            jobs,
        } => commands::cmd_sweep(io.config, &io.overrides, io.out, &qp, &seeds, jobs),
        Command::Compare {
            io,
            methods,
            seeds,
            jobs,
        } => commands::cmd_compare(io.config, &io.overrides, io.out, &methods, &seeds, jobs),
        Command::Verify {
            beta,
            eta,
            r,
            qp,
            steps,
            checkpoints,
            threshold,
            w0,
        } => {
            let checkpoints = if checkpoints.is_empty() {
                vec![100, 1000, 10_000]
            } else {
                checkpoints
            };
            commands::cmd_verify(beta, eta, r, qp, steps, &checkpoints, threshold, &w0)
        }
        Command::GenData {
            generator,
            n,
            noise,
            seed,
            centers,
            out,
        } => commands::cmd_gen_data(&generator, n, noise, seed, centers, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
