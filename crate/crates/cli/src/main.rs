//! `cycleforge`: generate → average → zeros → verify, with JSON output.

mod commands;
mod manifest;
mod render;
mod selfcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::commands::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "cycleforge",
    version,
    about = "First-order averaging pipeline for limit cycles"
)]
struct Cli {
    /// Print a human-readable table instead of JSON on stdout.
    #[arg(long, global = true)]
    pretty: bool,

    /// Cap on worker threads.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Table of exact trigonometric moments.
    Moments(MomentsArgs),
    /// Averaged system of a spec.
    Average(AverageArgs),
    /// Certified zeros of the averaged system.
    Zeros(ZerosArgs),
    /// Build an instance with the maximal number of simple zeros.
    Generate(GenerateArgs),
    /// Shoot for the periodic orbits predicted by the zeros.
    Verify(VerifyArgs),
    /// average, zeros and verify in one run.
    Pipeline(PipelineArgs),
    /// Built-in consistency checks; exit 0 or 4.
    Selfcheck,
}

#[derive(Args, Debug, Serialize)]
pub struct MomentsArgs {
    /// Largest p + q in the table.
    #[arg(long, default_value_t = 8)]
    pub max_degree: u32,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct AverageArgs {
    /// Spec file, or `-` for stdin.
    pub spec: PathBuf,
    /// Compare with direct quadrature of the integrands.
    #[arg(long)]
    pub oracle_check: bool,
    /// Number of random points for the oracle check.
    #[arg(long, default_value_t = 20)]
    pub oracle_points: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct SolveArgs {
    /// Search box `r_min,r_max;z1_lo,z1_hi;...`; derived from the system when omitted.
    #[arg(long = "box", value_name = "BOX")]
    pub search_box: Option<String>,
    #[arg(long, default_value_t = 1e-12)]
    pub residual_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub jac_tol: f64,
    /// Seeds per axis for the grid search.
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Newton iteration budget per seed.
    #[arg(long, default_value_t = 60)]
    pub max_iterations: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct ZerosArgs {
    pub spec: PathBuf,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct GenerateArgs {
    /// cont-odd, cont-even, disc, hopf-cont or hopf-disc.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub d: usize,
    /// Comma-separated positive r targets.
    #[arg(long, value_name = "LIST")]
    pub r_roots: Option<String>,
    /// z targets, one comma-separated list per coordinate, lists separated by `;`.
    #[arg(long, value_name = "LISTS")]
    pub z_roots: Option<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct ShootArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Also run the ε-halving study for every zero.
    #[arg(long)]
    pub study: bool,
    /// ε values of the study, comma-separated and decreasing.
    #[arg(long, value_name = "LIST", default_value = "1e-2,5e-3,2.5e-3,1.25e-3")]
    pub study_eps: String,
    /// Largest accepted distance between the orbit and its prediction.
    #[arg(long, default_value_t = 0.05)]
    pub max_distance: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub shoot_tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    pub spec: PathBuf,
    /// Output of `zeros` to take the predictions from instead of solving again.
    #[arg(long)]
    pub zeros: Option<PathBuf>,
    #[command(flatten)]
    pub shoot: ShootArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Write the orbit of one verified cycle as CSV (t,x,y,z1,...).
    #[arg(long, value_name = "CSV")]
    pub trace: Option<PathBuf>,
    /// Index of the zero whose orbit is traced.
    #[arg(long, default_value_t = 0)]
    pub trace_zero: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct PipelineArgs {
    pub spec: PathBuf,
    #[command(flatten)]
    pub shoot: ShootArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = commands::Context {
        pretty: cli.pretty,
        jobs: cli.jobs,
    };
    let result = match &cli.command {
        Command::Moments(a) => commands::moments(&ctx, a),
        Command::Average(a) => commands::average(&ctx, a),
        Command::Zeros(a) => commands::zeros(&ctx, a),
        Command::Generate(a) => commands::generate(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
        Command::Pipeline(a) => commands::pipeline(&ctx, a),
        Command::Selfcheck => selfcheck::run(&ctx),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
