use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use svoxtk::cvt::{order_zyx, run_cvt};
use svoxtk::fsq::FsqConfig;
use svoxtk::jacobi::{decode_jacobi, decode_sequential, TablePredictor};
use svoxtk::mesh::normalize_mesh;
use svoxtk::metrics::{
    align_best, apcu, gcu, gzip_gap, mcs_normalized, sample_surface, write_report, ReportRow, TokenStatsInput,
};
use svoxtk::saliency::{mean_curvature, saliency_from_curvature, saliency_to_volume, upsample_cubic, DEFAULT_SCALES};
use svoxtk::sizefield::{
    check_sweep_monotone, density_field, estimate_count, solve_k, sweep, write_sweep_csv, DEFAULT_K_MAX,
};
use svoxtk::tokens::{perturb_tokens, read_tokens, tokenize, write_tokens};
use svoxtk::volume::{max_pool, read_volume, voxelize_surface, write_volume};
use svoxtk::{Mesh, PointSet, SizeParams, Volume};

use crate::{
    Command, JacobiArgs, MetricsArgs, PartitionArgs, PerturbArgs, SaliencyArgs, SizeArgs, SweepArgs, TokenizeArgs,
    VoxelizeArgs,
};

/// Resolution the saliency volume is pooled to before optional upsampling.
const POOLED_RESOLUTION: u32 = 64;
const DEFAULT_K: f64 = 4.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Core(#[from] svoxtk::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(svoxtk::Error::Io(_) | svoxtk::Error::Format(_)) => 2,
            CliError::Domain(_) | CliError::Core(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Voxelize(a) => voxelize(a),
        Command::Saliency(a) => saliency(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Partition(a) => partition(a),
        Command::Tokenize(a) => cmd_tokenize(a),
        Command::Perturb(a) => perturb(a),
        Command::JacobiDemo(a) => jacobi_demo(a),
        Command::Metrics(a) => metrics(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn voxelize(a: VoxelizeArgs) -> Result<()> {
    let r = a.resolution;
    let mesh = normalize_mesh(&Mesh::load_obj(&a.input)?, r)?;
    let grid = voxelize_surface(&mesh, r)?;
    let values = saliency_from_curvature(&mesh, &DEFAULT_SCALES)?;
    let mut volume = saliency_to_volume(&mesh, &values, &grid)?;
    if r > POOLED_RESOLUTION {
        volume = max_pool(&volume, r / POOLED_RESOLUTION)?;
        if a.upsample {
            volume = upsample_cubic(&volume, r, Some(&grid))?;
        }
    }
    write_volume(&volume, &a.output)?;
    println!("resolution={} voxels={}", volume.resolution(), volume.len());
    Ok(())
}

fn saliency(a: SaliencyArgs) -> Result<()> {
    let mesh = Mesh::load_obj(&a.input)?;
    let values = if a.curvature {
        mean_curvature(&mesh)?
    } else {
        let normalized = normalize_mesh(&mesh, POOLED_RESOLUTION)?;
        saliency_from_curvature(&normalized, &DEFAULT_SCALES)?
    };
    let mut w = create(&a.output)?;
    values.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn k_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(min >= 1.0) || !(max >= min) {
        return Err(CliError::Usage("K range needs 1 <= k-min <= k-max and k-step > 0".into()));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let volume: Volume = read_volume(&a.input)?;
    let ks = k_grid(a.k_min, a.k_max, a.k_step)?;
    let rows = sweep(&volume, &ks, &a.t)?;
    check_sweep_monotone(&rows).map_err(CliError::Domain)?;
    let mut w = create(&a.output)?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn size_params(volume: &Volume, s: &SizeArgs) -> Result<SizeParams> {
    let k = match s.target_c {
        Some(c) => solve_k(volume, s.t, c, DEFAULT_K_MAX)?,
        None => s.k.unwrap_or(DEFAULT_K),
    };
    Ok(SizeParams::new(k, s.t)?)
}

fn partition(a: PartitionArgs) -> Result<()> {
    let volume: Volume = read_volume(&a.input)?;
    let params = size_params(&volume, &a.size)?;
    let field = density_field(&volume, &params)?;
    let n = estimate_count(&volume, &params)?;
    let p = run_cvt(&field, n, a.size.iterations, a.size.rng_seed)?;
    let p = p.relabel(&order_zyx(&p).permutation)?;
    let mut w = create(&a.seeds_out)?;
    p.write_seeds_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&a.assignment_out)?;
    p.write_assignment_csv(volume.grid(), &mut w)?;
    w.flush()?;
    let summary = format!(
        "n,k,t,energy,iterations\n{},{},{},{},{}\n",
        p.len(),
        params.k(),
        params.t(),
        p.energy(),
        p.iterations_run()
    );
    match a.summary_out {
        Some(path) => std::fs::write(path, summary)?,
        None => print!("{summary}"),
    }
    Ok(())
}

fn cmd_tokenize(a: TokenizeArgs) -> Result<()> {
    let volume: Volume = read_volume(&a.input)?;
    let params = size_params(&volume, &a.size)?;
    let cfg = FsqConfig::new(a.levels)?;
    let seq = tokenize(&volume, &params, a.size.iterations, a.size.rng_seed, &cfg)?;
    write_tokens(&seq, &a.output)?;
    println!("tokens={} k={} t={}", seq.len(), params.k(), params.t());
    Ok(())
}

fn perturb(a: PerturbArgs) -> Result<()> {
    let seq = read_tokens(&a.input)?;
    let out = perturb_tokens(&seq, a.fraction, a.rng_seed)?;
    write_tokens(&out, &a.output)?;
    Ok(())
}

fn jacobi_demo(a: JacobiArgs) -> Result<()> {
    let pred = TablePredictor::read_csv(BufReader::new(File::open(&a.predictor)?), a.vocab)?;
    let ctx = a.context.as_bytes();
    let trace = decode_jacobi(&pred, a.n, ctx, a.cap, a.rng_seed)?;
    let sequential = decode_sequential(&pred, a.n, ctx)?;
    if trace.sequence != sequential {
        return Err(CliError::Domain("jacobi result differs from sequential decoding".into()));
    }
    let mut w = create(&a.output)?;
    writeln!(w, "iteration,accepted")?;
    for (i, acc) in trace.accepted.iter().enumerate() {
        writeln!(w, "{},{acc}", i + 1)?;
    }
    w.flush()?;
    if let Some(path) = a.sequence_out {
        let mut w = create(&path)?;
        writeln!(w, "position,code")?;
        for (i, c) in trace.sequence.iter().enumerate() {
            writeln!(w, "{i},{c}")?;
        }
        w.flush()?;
    }
    println!("n={} iterations={} fallback={} matches_sequential=true", a.n, trace.iterations, trace.fallback);
    Ok(())
}

/// Surface samples of a mesh, or the vertices of a face-less OBJ.
fn load_shape(path: &Path, samples: usize, seed: u64) -> Result<(PointSet, Option<Mesh>)> {
    let mesh = Mesh::load_obj(path)?;
    if mesh.faces().is_empty() {
        return Ok((PointSet::new(mesh.vertices().to_vec()), None));
    }
    Ok((sample_surface(&mesh, samples, seed)?, Some(mesh)))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    if a.reference.len() != a.candidate.len() {
        return Err(CliError::Usage("--reference and --candidate need the same number of files".into()));
    }
    let pairs = a.reference.len();
    if pairs > 0 && !a.tokens.is_empty() && a.tokens.len() != pairs {
        return Err(CliError::Usage("--tokens needs one file per shape pair".into()));
    }
    let rows = pairs.max(a.tokens.len());
    if rows == 0 {
        return Err(CliError::Usage("nothing to measure: give --reference/--candidate and/or --tokens".into()));
    }
    let sequences = a.tokens.iter().map(read_tokens).collect::<svoxtk::Result<Vec<_>>>()?;
    let codebook = match sequences.first() {
        Some(s) => s.config()?.codebook_size() as u64,
        None => 0,
    };
    if sequences.iter().any(|s| s.header.levels != sequences[0].header.levels) {
        return Err(CliError::Domain("token files use different FSQ levels".into()));
    }
    let codes: Vec<Vec<u32>> = sequences.iter().map(|s| s.codes()).collect();
    let mut report = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut row = ReportRow::default();
        if i < pairs {
            let (reference, _) = load_shape(&a.reference[i], a.samples, a.rng_seed)?;
            let (candidate, mesh) = load_shape(&a.candidate[i], a.samples, a.rng_seed)?;
            row.shape_id = stem(&a.candidate[i]);
            row.cd = Some(align_best(&candidate, &reference, a.icp_iters)?.cd);
            row.mcs = mesh.map(|m| mcs_normalized(&m)).transpose()?;
        } else {
            row.shape_id = stem(&a.tokens[i]);
        }
        if i < codes.len() {
            let seen = TokenStatsInput::new(codes[..=i].to_vec(), codebook)?;
            let own = TokenStatsInput::new(vec![codes[i].clone()], codebook)?;
            row.gcu_running = Some(gcu(&seen));
            row.apcu = Some(apcu(&own));
            row.gzip_gap = Some(gzip_gap(&codes[i..=i], a.k_perms, a.rng_seed)?);
        }
        report.push(row);
    }
    let mut w = create(&a.report)?;
    write_report(&report, &mut w)?;
    w.flush()?;
    Ok(())
}
