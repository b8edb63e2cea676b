//! `workbench`: design a waveguide cavity, simulate and analyze it, predict
//! strong coupling, and fit measured or synthetic spectra.
//!
//! Exit codes: 0 success, 1 numerical or model failure, 2 bad input or
//! configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;

#[derive(Parser)]
#[command(name = "workbench", version, about = "Photonic-crystal waveguide cavity and strong-coupling workbench")]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for synthetic data; overrides spectra.synth.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for FDTD row bands and per-spectrum fits.
    #[arg(long, global = true, env = "WORKBENCH_THREADS", default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the hole lattice, apply the cavity shifts and rasterize to cavity.epsmap.
    Design,
    /// Broadband scan, then a narrowband ring-down at the strongest resonance.
    Simulate { epsmap: Option<PathBuf> },
    /// Resonance energy, Q (decay and flux) and mode volume.
    Analyze { probe: Option<PathBuf>, fldmap: Option<PathBuf>, epsmap: Option<PathBuf> },
    /// Coupling constant, Rabi splitting and splitting versus Q.
    Predict {
        /// mode.json from `analyze`; without it E0 and V come from the cqed section.
        #[arg(long)]
        mode: Option<PathBuf>,
    },
    /// Write a synthetic temperature series of two-branch spectra.
    Synthesize,
    /// Fit Lorentzian peaks to one spectrum CSV.
    Fit {
        spectrum: Option<PathBuf>,
        #[arg(long)]
        n_peaks: Option<usize>,
    },
    /// Track both branches through a series directory and fit the anticrossing.
    Anticross { dir: Option<PathBuf> },
    /// Collect mode.json results into a Q map over (a, r/a).
    Qmap { dir: Option<PathBuf> },
}

fn run(cli: Cli) -> phcwg::Result<()> {
    if cli.threads == 0 {
        return Err(phcwg::Error::Parameter("--threads must be >= 1".into()));
    }
    // fails only if a pool already exists, which cannot happen here
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    let cfg = config::load(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Ctx { cfg, out: cli.out, threads: cli.threads, seed: cli.seed };
    match cli.command {
        Command::Design => commands::design(&ctx),
        Command::Simulate { epsmap } => commands::simulate(&ctx, epsmap),
        Command::Analyze { probe, fldmap, epsmap } => commands::analyze(&ctx, probe, fldmap, epsmap),
        Command::Predict { mode } => commands::predict(&ctx, mode),
        Command::Synthesize => commands::synthesize_series(&ctx),
        Command::Fit { spectrum, n_peaks } => commands::fit(&ctx, spectrum, n_peaks),
        Command::Anticross { dir } => commands::anticross(&ctx, dir),
        Command::Qmap { dir } => commands::qmap(&ctx, dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
