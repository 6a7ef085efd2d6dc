//! `svoxtk` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 IO or file format, 3 domain error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "svoxtk", version, about = "Saliency-guided supervoxel tokenization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Voxelize an OBJ mesh and attach curvature saliency (writes SVXV).
    Voxelize(VoxelizeArgs),
    /// Per-vertex curvature or saliency of an OBJ mesh (writes CSV `vertex,value`).
    Saliency(SaliencyArgs),
    /// Compression ratio over a (K, t) grid (writes CSV `K,t,c`).
    Sweep(SweepArgs),
    /// Supervoxel partition of a saliency volume (writes seeds/assignment CSVs).
    Partition(PartitionArgs),
    /// Ordered FSQ token sequence of a saliency volume (writes SVXT).
    Tokenize(TokenizeArgs),
    /// Overwrite a fraction of tokens with random codes (writes SVXT).
    Perturb(PerturbArgs),
    /// Jacobi decoding with a table predictor, checked against sequential decoding.
    JacobiDemo(JacobiArgs),
    /// Geometry and token metrics for a batch of shapes (writes the report CSV).
    Metrics(MetricsArgs),
}

#[derive(Args, Debug)]
struct VoxelizeArgs {
    /// Input Wavefront OBJ.
    #[arg(long)]
    input: PathBuf,
    /// Grid resolution.
    #[arg(long, default_value_t = 64, value_parser = parse_resolution)]
    resolution: u32,
    /// After pooling to 64³, interpolate back to the input resolution.
    #[arg(long)]
    upsample: bool,
    /// Output SVXV file.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SaliencyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Dump signed mean curvature instead of normalized saliency.
    #[arg(long)]
    curvature: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Input SVXV file.
    #[arg(long)]
    input: PathBuf,
    /// Saliency pivots.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5])]
    t: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    k_min: f64,
    #[arg(long, default_value_t = 10.0)]
    k_max: f64,
    #[arg(long, default_value_t = 0.5)]
    k_step: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SizeArgs {
    /// Largest supervoxel size (voxels) in low-saliency regions [default: 4].
    #[arg(long, conflicts_with = "target_c")]
    k: Option<f64>,
    /// Target compression ratio; solves for K instead.
    #[arg(long)]
    target_c: Option<f64>,
    /// Saliency pivot.
    #[arg(long, default_value_t = 0.1)]
    t: f64,
    /// Lloyd iterations.
    #[arg(long, default_value_t = 40)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    size: SizeArgs,
    /// Seeds CSV `index,cx,cy,cz` (Z-Y-X order).
    #[arg(long)]
    seeds_out: PathBuf,
    /// Assignment CSV `voxel_x,voxel_y,voxel_z,seed_index`.
    #[arg(long)]
    assignment_out: PathBuf,
    /// Summary CSV `n,k,t,energy,iterations`; printed to stdout when omitted.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TokenizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    size: SizeArgs,
    /// FSQ levels per descriptor dimension.
    #[arg(long, value_delimiter = ',', default_values_t = [9u16, 9, 5, 5, 5])]
    levels: Vec<u16>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fraction of positions to overwrite, at most 0.05.
    #[arg(long)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct JacobiArgs {
    /// Predictor table CSV `position,prev_code,next_code`.
    #[arg(long)]
    predictor: PathBuf,
    /// Vocabulary size; inferred from the table when omitted.
    #[arg(long)]
    vocab: Option<u32>,
    /// Sequence length.
    #[arg(long)]
    n: usize,
    /// Parallel sweep cap before sequential fallback.
    #[arg(long, default_value_t = 30)]
    cap: usize,
    /// Opaque context passed to the predictor.
    #[arg(long, default_value = "")]
    context: String,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Trace CSV `iteration,accepted`.
    #[arg(long)]
    output: PathBuf,
    /// Decoded sequence CSV `position,code`.
    #[arg(long)]
    sequence_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Reference shapes (OBJ; a file without faces is read as a point cloud).
    #[arg(long, num_args = 1..)]
    reference: Vec<PathBuf>,
    /// Candidate shapes, paired with `--reference` in order.
    #[arg(long, num_args = 1..)]
    candidate: Vec<PathBuf>,
    /// Token files, one per row.
    #[arg(long, num_args = 1..)]
    tokens: Vec<PathBuf>,
    /// Surface samples per mesh.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 50)]
    icp_iters: usize,
    /// Random permutations per sequence for the compressibility gap.
    #[arg(long, default_value_t = 16)]
    k_perms: usize,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Report CSV `shape_id,cd,mcs,gcu_running,apcu,gzip_gap`.
    #[arg(long)]
    report: PathBuf,
}

fn parse_resolution(raw: &str) -> Result<u32, String> {
    let r: u32 = raw.parse().map_err(|_| format!("{raw:?} is not an integer"))?;
    if svoxtk::volume::ALLOWED_RESOLUTIONS.contains(&r) {
        Ok(r)
    } else {
        Err(format!("resolution must be one of {:?}", svoxtk::volume::ALLOWED_RESOLUTIONS))
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SVOXTK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("SVOXTK_THREADS must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
