//! Command-line driver. `run` parses arguments and returns the process exit
//! code, so commands can be exercised in-process.
//!
//! Exit codes: 0 ok, 2 format or argument error, 3 degenerate input,
//! 4 non-finite energy, 5 grid mismatch.

mod commands;
mod config;
mod pipeline;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::energy::Term;
use crate::error::Error;

pub use config::{load_refine_config, Ablation, PipelineConfig, PipelineSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn mismatch(msg: impl Into<String>) -> Self {
        Self { code: EXIT_MISMATCH, message: msg.into() }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Self { code: EXIT_FORMAT, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::EmptyMask | Error::DegenerateMask(_) => EXIT_DEGENERATE,
            Error::NonFinite { .. } => EXIT_NUMERIC,
            Error::InvalidArgument(_) | Error::Format(_) | Error::Unsupported(_) | Error::Io(_) => EXIT_FORMAT,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "vesselfield", version, about = "Refine vessel occupancy volumes into smooth signed distance fields")]
pub struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true, env = "VESSELFIELD_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Signed distance field of a binary mask volume.
    SdfFromMask(SdfFromMaskArgs),
    /// Minimize the regularized energy starting from a thresholded occupancy.
    Refine(RefineArgs),
    /// Extract the iso-surface of an SDF volume.
    Mesh(MeshArgs),
    /// Score a prediction volume against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic vessel phantom.
    Phantom(PhantomArgs),
    /// Phantom or occupancy -> init -> refine -> mesh -> eval.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SdfFromMaskArgs {
    /// Mask volume (.json/.raw basename or .nii).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output SDF volume basename.
    #[arg(long)]
    pub out: PathBuf,
}

/// Energy and optimizer overrides shared by `refine` and `pipeline`.
#[derive(Debug, Args, Clone, Default)]
pub struct EnergyArgs {
    /// Strict JSON refine config; keys override the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// SDF term weight [default: 0.1].
    #[arg(long)]
    pub lambda_s: Option<f64>,
    /// Occupancy term weight [default: 0.01].
    #[arg(long)]
    pub lambda_o: Option<f64>,
    /// Eikonal term weight [default: 0.01].
    #[arg(long)]
    pub lambda_e: Option<f64>,
    /// Gaussian term weight [default: 0.1].
    #[arg(long)]
    pub lambda_g: Option<f64>,
    /// Surface term weight [default: 0.1].
    #[arg(long)]
    pub lambda_r: Option<f64>,
    /// Blur standard deviation in voxels [default: 2].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Surface sharpness in 1/mm [default: 2/dx].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Occupancy temperature in mm [default: 0.5*dx].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Step size in mm [default: 0.01].
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Iteration cap [default: 500].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop when the gradient sup-norm drops below this [default: 1e-10].
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Trace sampling interval [default: 10].
    #[arg(long)]
    pub trace_every: Option<usize>,
    /// Occupancy threshold for initialization.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Occupancy volume.
    #[arg(long)]
    pub occupancy: PathBuf,
    /// Reference SDF; without it the SDF term is skipped.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Output SDF volume basename; the trace goes to `<out>_trace.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop a term (sdf, occ, eik, gauss, sur); repeatable.
    #[arg(long, value_name = "TERM")]
    pub disable: Vec<Term>,
    #[command(flatten)]
    pub energy: EnergyArgs,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// SDF volume.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Mesh file; components go to `<out stem>_components.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Iso value in mm.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub iso: f64,
    /// obj or ply [default: from the extension, else obj].
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted volume (sdf: inside where < 0; otherwise inside where >= 0.5).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth volume, same conventions.
    #[arg(long)]
    pub truth: PathBuf,
    /// Report CSV; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Case label in the report.
    #[arg(long, default_value = "case")]
    pub case: String,
    /// Surface samples per mesh.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Surface sampling seed.
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    /// Shell radius for jd, in voxels.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_SHELL_RADIUS)]
    pub shell_radius: f64,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Builtin preset (tube64, ybranch96, slab128).
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub preset: Option<String>,
    /// Phantom spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Override the degradation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Builtin phantom preset.
    #[arg(long, conflicts_with_all = ["spec", "occupancy"])]
    pub preset: Option<String>,
    /// Phantom spec JSON file.
    #[arg(long, conflicts_with = "occupancy")]
    pub spec: Option<PathBuf>,
    /// Ingest an occupancy volume instead of generating a phantom.
    #[arg(long)]
    pub occupancy: Option<PathBuf>,
    /// Ground truth for an ingested occupancy (mask or SDF volume).
    #[arg(long, requires = "occupancy")]
    pub truth: Option<PathBuf>,
    /// Override the degradation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// none, refine (skip refinement) or a comma list of terms to drop.
    #[arg(long, default_value = "none")]
    pub ablate: Ablation,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Surface samples per mesh.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Surface sampling seed.
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    /// Shell radius for jd, in voxels.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_SHELL_RADIUS)]
    pub shell_radius: f64,
    #[command(flatten)]
    pub energy: EnergyArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::format("--threads must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::format(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::SdfFromMask(a) => commands::sdf_from_mask(&a),
        Command::Refine(a) => commands::refine(&a),
        Command::Mesh(a) => commands::mesh(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Phantom(a) => commands::phantom(&a),
        Command::Pipeline(a) => pipeline::run(&a),
    })
}
