mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Check the structural assumptions on the coefficient matrix.
    Validate,
    /// Solve once and dump the space-time grid function.
    Solve,
    /// Two-mesh sweep over time resolutions with N fixed.
    SweepTime,
    /// Two-mesh sweep over space resolutions with M fixed.
    SweepSpace,
    /// Write the Shishkin mesh and its transition parameters.
    MeshDump,
    /// Layer functions on the mesh and the interesting points.
    Diagnostics,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Validate => "validate",
            Mode::Solve => "solve",
            Mode::SweepTime => "sweep-time",
            Mode::SweepSpace => "sweep-space",
            Mode::MeshDump => "mesh-dump",
            Mode::Diagnostics => "diagnostics",
        }
    }
}

/// Shishkin-mesh solver for singularly perturbed parabolic
/// reaction-diffusion systems with Robin boundary conditions.
#[derive(Debug, Clone, Parser)]
#[command(version, about)]
pub struct Args {
    #[arg(long, value_enum)]
    pub mode: Mode,

    /// Problem config file (TOML), or `builtin:example1`.
    #[arg(long, default_value = "builtin:example1")]
    pub problem: String,

    /// Space intervals (solve, mesh-dump, diagnostics; fixed N of sweep-time).
    #[arg(long = "N", value_name = "N")]
    pub space_intervals: Option<usize>,

    /// Time intervals (solve; fixed M of sweep-space).
    #[arg(long = "M", value_name = "M")]
    pub time_intervals: Option<usize>,

    /// Sweep parameter(s), e.g. `2^-7,2^-8`. Single-run modes use the first
    /// value to derive the perturbation parameters.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eta: Vec<String>,

    /// Ratios `eps_i / eta`; defaults to `1/16,1/8` for two components.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Vec<String>,

    /// Explicit perturbation parameters for single-run modes, e.g.
    /// `2^-15,2^-14`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub epsilons: Vec<String>,

    /// Doubling resolution list for sweeps.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
    pub resolutions: Vec<usize>,

    /// Overrides the config's alpha.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Output directory for artifacts.
    #[arg(long, env = "SHISHKIN_OUT", default_value = "out")]
    pub out: PathBuf,

    /// Solve each time step with the dense LU instead of block Thomas.
    #[arg(long)]
    pub dense_fallback: bool,

    /// Relative residual tolerance for each time step.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,

    /// Run sweep cells and validation rows on the calling thread.
    #[arg(long)]
    pub sequential: bool,

    /// Proceed even if the assumptions on the coefficients fail.
    #[arg(long)]
    pub skip_validation: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure:#}");
            ExitCode::from(failure.exit_code())
        }
    }
}
