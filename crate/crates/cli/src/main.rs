mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ens_core::train::Ablation;
use ens_core::EnsError;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "ens", version, about = "Explicit neural surfaces from multi-view images")]
struct Cli {
    /// JSON training configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random component of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives the deterministic single-threaded mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for cached eigenbases.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic multi-view dataset of an analytic shape.
    GenScene(GenSceneArgs),
    /// Fit a surface to a dataset.
    Train(TrainArgs),
    /// Extract a mesh from a checkpoint at any resolution.
    Extract(ExtractArgs),
    /// Chamfer, ICR and PSNR metrics of a checkpoint or mesh.
    Eval(EvalArgs),
    /// Shaded and normal-map images of a checkpoint from one pose.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ShapeKind {
    Ellipsoid,
    Bumpy,
    Box,
}

#[derive(Debug, Args)]
struct GenSceneArgs {
    #[arg(long, value_enum)]
    shape: ShapeKind,
    /// Ellipsoid semi-axes, or box half-extents.
    #[arg(long, default_value_t = 0.9)]
    a: f64,
    #[arg(long, default_value_t = 0.6)]
    b: f64,
    #[arg(long, default_value_t = 0.6)]
    c: f64,
    /// Bumpy sphere base radius.
    #[arg(long, default_value_t = 0.9)]
    radius: f64,
    /// Bumpy sphere bump amplitude.
    #[arg(long, default_value_t = 0.08)]
    amplitude: f64,
    /// Bumpy sphere angular frequency.
    #[arg(long, default_value_t = 6)]
    frequency: u32,
    /// Box corner rounding radius.
    #[arg(long, default_value_t = 0.15)]
    rounding: f64,
    /// Use the high-frequency albedo pattern (default for bumpy).
    #[arg(long)]
    high_frequency_albedo: Option<bool>,
    #[arg(long, default_value_t = 24)]
    views: usize,
    #[arg(long, default_value_t = 128)]
    res: usize,
    #[arg(long, default_value_t = 3.0)]
    camera_radius: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ablate: Option<Ablation>,
    /// Weight of the geometry-shader photometric term.
    #[arg(long)]
    lambda_g: Option<f64>,
    /// Train once per weight in {0, 0.1, 0.3, 1} into subdirectories of --out.
    #[arg(long, conflicts_with = "lambda_g")]
    lambda_g_sweep: bool,
}

#[derive(Debug, Args)]
#[group(id = "connectivity", multiple = false)]
struct Connectivity {
    /// Icosphere subdivision level of the extraction domain.
    #[arg(long, group = "connectivity")]
    tri_level: Option<u32>,
    /// Quad sphere with n x n cells per cube face.
    #[arg(long, group = "connectivity")]
    quad: Option<usize>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    connectivity: Connectivity,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct EvalSource {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    obj: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    source: EvalSource,
    #[arg(long)]
    data: PathBuf,
    /// Extraction level for checkpoints.
    #[arg(long)]
    tri_level: Option<u32>,
    /// Metrics file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Render dataset view `--view` of this dataset and report PSNR against it.
    #[arg(long, requires = "view")]
    data: Option<PathBuf>,
    #[arg(long)]
    view: Option<usize>,
    /// Camera position for a novel pose, as x,y,z; the camera looks at the origin.
    #[arg(long, value_delimiter = ',', conflicts_with = "view")]
    eye: Option<Vec<f64>>,
    #[arg(long, default_value_t = 128)]
    res: usize,
    #[arg(long, default_value_t = 1.2)]
    focal_scale: f64,
    #[arg(long)]
    tri_level: Option<u32>,
    /// Output path of the shaded PNG; the normal map goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] EnsError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Core(e) => match e {
                EnsError::Argument(_) | EnsError::Config(_) => 2,
                EnsError::Diverged { .. } => 3,
                EnsError::Io { .. } | EnsError::Format { .. } | EnsError::Parse { .. } | EnsError::Versioning(_) => 4,
                _ => 1,
            },
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
