//! `spherewaist`: tube volumes, equalizing partitions, waist estimates and
//! property suites from the command line.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 solver did not
//! converge, 4 a theorem check or property suite failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{CheckArgs, EqualizeArgs, FileConfig, Overlay, TubeArgs, WaistArgs};

#[derive(Parser, Debug)]
#[command(name = "spherewaist", version, about = "Numerical checks of the waist inequality on spheres")]
struct Cli {
    /// TOML file with top-level seed/out/threads and one section per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts and the manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form equatorial tube fractions vol(S^{n−k}+ε)/vol(S^n).
    Tube(TubeArgs),
    /// Search for a partition into 2^i cells of equal volume with a common center image.
    Equalize(EqualizeArgs),
    /// Estimate max_z vol(f⁻¹(z)+ε) and compare it with the tube bound.
    Waist(WaistArgs),
    /// Run the seeded property suites.
    Check(CheckArgs),
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
    NotConverged,
    CheckFailed,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::NotConverged => 3,
            Failure::CheckFailed => 4,
        }
    }
}

impl From<spherewaist::Error> for Failure {
    fn from(e: spherewaist::Error) -> Self {
        use spherewaist::Error as E;
        match e {
            E::InvalidArgument(_) | E::Parse(_) | E::DepthTooLarge(_) | E::DimMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Global settings after merging flags over the config file.
pub struct Globals {
    pub seed: u64,
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(t) = cli.threads.or(file.threads) {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("cannot start thread pool: {e}")))?;
    }
    let g = Globals { seed: cli.seed.or(file.seed).unwrap_or(0), out: cli.out.or(file.out) };
    match cli.command {
        Command::Tube(a) => commands::tube(&g, a.overlay(file.tube)),
        Command::Equalize(a) => commands::equalize(&g, a.overlay(file.equalize)),
        Command::Waist(a) => commands::waist(&g, a.overlay(file.waist)),
        Command::Check(a) => commands::check(&g, a.overlay(file.check)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::NotConverged => eprintln!("error: solver did not converge"),
                Failure::CheckFailed => eprintln!("error: check failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
