//! Ordered supervoxel token sequences and the SVXT file format.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use crate::cvt::{run_cvt, zyx_cmp, zyx_permutation, SupervoxelPartition};
use crate::error::{Error, FormatError, Result};
use crate::fsq::{describe_all, FsqConfig};
use crate::geom::Vec3;
use crate::random;
use crate::sizefield::{density_field, estimate_count, SizeParams};
use crate::volume::{check_magic, read_u32, SaliencyVolume};
use crate::Scalar;

/// Largest fraction of tokens [`perturb_tokens`] may overwrite.
pub const MAX_PERTURB_FRACTION: f64 = 0.05;

const TOKEN_MAGIC: [u8; 4] = *b"SVXT";
const TOKEN_VERSION: u32 = 1;
const TOKEN_RECORD: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenHeader {
    pub resolution: u32,
    pub k: f32,
    pub t: f32,
    pub levels: Vec<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenRecord {
    /// Supervoxel center in grid coordinates.
    pub center: Vec3<f32>,
    pub code: u32,
}

/// Records in Z-Y-X order of their centers, one per supervoxel.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub header: TokenHeader,
    pub records: Vec<TokenRecord>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn codes(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.code).collect()
    }

    pub fn config(&self) -> Result<FsqConfig> {
        FsqConfig::new(self.header.levels.clone())
    }
}

/// Full tokenization: density field, supervoxel count, CVT, Z-Y-X ordering, descriptors and
/// FSQ codes. Also returns the partition the tokens were taken from.
pub fn tokenize_with_partition<T: Scalar>(
    volume: &SaliencyVolume<T>,
    params: &SizeParams<T>,
    iterations: usize,
    rng_seed: u64,
    cfg: &FsqConfig,
) -> Result<(TokenSequence, SupervoxelPartition<T>)> {
    if cfg.dim() != 5 {
        return Err(Error::DimensionMismatch { expected: 5, got: cfg.dim() });
    }
    let field = density_field(volume, params)?;
    let n = estimate_count(volume, params)?;
    let partition = run_cvt(&field, n, iterations, rng_seed)?;
    let descriptors = describe_all(volume.grid(), &partition)?;
    // Order on the stored f32 centers so the file validates exactly as written.
    let centers: Vec<Vec3<f32>> = partition.seeds().iter().map(|s| s.cast()).collect();
    let records = zyx_permutation(&centers)
        .into_iter()
        .map(|i| Ok(TokenRecord { center: centers[i], code: cfg.encode(&descriptors[i])? }))
        .collect::<Result<Vec<_>>>()?;
    let header = TokenHeader {
        resolution: volume.resolution(),
        k: params.k().as_f32(),
        t: params.t().as_f32(),
        levels: cfg.levels().to_vec(),
    };
    Ok((TokenSequence { header, records }, partition))
}

pub fn tokenize<T: Scalar>(
    volume: &SaliencyVolume<T>,
    params: &SizeParams<T>,
    iterations: usize,
    rng_seed: u64,
    cfg: &FsqConfig,
) -> Result<TokenSequence> {
    tokenize_with_partition(volume, params, iterations, rng_seed, cfg).map(|(seq, _)| seq)
}

/// Overwrites `⌊fraction · N⌋` distinct, uniformly chosen positions with uniform random
/// codes. Centers are untouched.
pub fn perturb_tokens(seq: &TokenSequence, fraction: f64, rng_seed: u64) -> Result<TokenSequence> {
    perturb_tokens_traced(seq, fraction, rng_seed).map(|(out, _)| out)
}

/// [`perturb_tokens`] that also reports the overwritten positions, in draw order.
pub fn perturb_tokens_traced(seq: &TokenSequence, fraction: f64, rng_seed: u64) -> Result<(TokenSequence, Vec<usize>)> {
    if !(0.0..=MAX_PERTURB_FRACTION).contains(&fraction) {
        return Err(Error::BadFraction(fraction));
    }
    let size = seq.config()?.codebook_size() as u64;
    let n = seq.len();
    let count = ((fraction * n as f64) + 1e-9).floor() as usize;
    let mut rng = random::rng(rng_seed);
    let positions = random::sample_indices(&mut rng, n, count.min(n));
    let mut out = seq.clone();
    for &p in &positions {
        out.records[p].code = random::below(&mut rng, size) as u32;
    }
    Ok((out, positions))
}

pub fn encode_tokens(seq: &TokenSequence) -> Vec<u8> {
    let h = &seq.header;
    let mut out = Vec::with_capacity(25 + 2 * h.levels.len() + TOKEN_RECORD * seq.len());
    out.extend_from_slice(&TOKEN_MAGIC);
    out.extend_from_slice(&TOKEN_VERSION.to_le_bytes());
    out.extend_from_slice(&h.resolution.to_le_bytes());
    out.extend_from_slice(&h.k.to_le_bytes());
    out.extend_from_slice(&h.t.to_le_bytes());
    out.push(h.levels.len() as u8);
    for l in &h.levels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    for r in &seq.records {
        for c in r.center.to_array() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&r.code.to_le_bytes());
    }
    out
}

fn read_f32(bytes: &[u8], at: usize) -> Result<f32, FormatError> {
    read_u32(bytes, at).map(f32::from_bits)
}

/// Parses and validates an SVXT byte buffer.
pub fn decode_tokens(bytes: &[u8]) -> Result<TokenSequence, FormatError> {
    check_magic(bytes, TOKEN_MAGIC)?;
    let version = read_u32(bytes, 4)?;
    if version != TOKEN_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let resolution = read_u32(bytes, 8)?;
    if resolution == 0 || resolution > 1 << 16 {
        return Err(FormatError::InvalidResolution(resolution));
    }
    let k = read_f32(bytes, 12)?;
    let t = read_f32(bytes, 16)?;
    if !(k >= 1.0 && k.is_finite()) || !(t > 0.0 && t < 1.0) {
        return Err(FormatError::InvalidHeader(format!("K = {k}, t = {t}")));
    }
    let dim = *bytes.get(20).ok_or(FormatError::Truncated)? as usize;
    let mut at = 21;
    let mut levels = Vec::with_capacity(dim);
    for _ in 0..dim {
        let b = bytes.get(at..at + 2).ok_or(FormatError::Truncated)?;
        levels.push(u16::from_le_bytes([b[0], b[1]]));
        at += 2;
    }
    let cfg = FsqConfig::new(levels.clone()).map_err(|_| FormatError::InvalidLevels(levels.clone()))?;
    let size = cfg.codebook_size() as u64;
    let count = read_u32(bytes, at)? as usize;
    at += 4;
    if count == 0 {
        return Err(FormatError::EmptySequence);
    }
    let body = &bytes[at..];
    let needed = count.checked_mul(TOKEN_RECORD).ok_or(FormatError::Truncated)?;
    if body.len() < needed {
        return Err(FormatError::Truncated);
    }
    if body.len() > needed {
        return Err(FormatError::TrailingBytes(body.len() - needed));
    }
    let mut records: Vec<TokenRecord> = Vec::with_capacity(count);
    for (index, rec) in body.chunks_exact(TOKEN_RECORD).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let center = Vec3::new(f(0), f(1), f(2));
        if !center.is_finite() {
            return Err(FormatError::NonFiniteCenter { index });
        }
        let code = u32::from_le_bytes(rec[12..16].try_into().unwrap());
        if code as u64 >= size {
            return Err(FormatError::CodeOutOfRange { index, code, size });
        }
        if records.last().is_some_and(|prev| zyx_cmp(prev.center, center) == Ordering::Greater) {
            return Err(FormatError::UnorderedRecords { index });
        }
        records.push(TokenRecord { center, code });
    }
    Ok(TokenSequence { header: TokenHeader { resolution, k, t, levels }, records })
}

pub fn write_tokens(seq: &TokenSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_tokens(seq))?;
    Ok(())
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<TokenSequence> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(decode_tokens(&bytes)?)
}
