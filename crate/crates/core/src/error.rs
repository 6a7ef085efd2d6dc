use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Malformed input files (SVXV, SVXT, OBJ, CSV).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file")]
    Truncated,
    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),
    #[error("invalid resolution {0}")]
    InvalidResolution(u32),
    #[error("record {index}: coordinate {coord:?} out of range for resolution {resolution}")]
    CoordinateOutOfRange { index: usize, coord: [u16; 3], resolution: u32 },
    #[error("record {index}: saliency out of range ({value})")]
    SaliencyOutOfRange { index: usize, value: f32 },
    #[error("unordered records at index {index}")]
    UnorderedRecords { index: usize },
    #[error("record {index}: code out of range ({code} >= {size})")]
    CodeOutOfRange { index: usize, code: u32, size: u64 },
    #[error("invalid codebook levels {0:?}")]
    InvalidLevels(Vec<u16>),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("record {index}: non-finite center")]
    NonFiniteCenter { index: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty mesh")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh has zero total area")]
    ZeroArea,
    #[error("unsupported resolution {0} (expected 64, 128, 256 or 512)")]
    UnsupportedResolution(u32),
    #[error("resolution {to} is not compatible with {from} (factor must divide exactly)")]
    IncompatibleResolution { from: u32, to: u32 },
    #[error("empty volume")]
    EmptyVolume,
    #[error("misaligned per-vertex values: {values} values for {vertices} vertices")]
    Misaligned { values: usize, vertices: usize },
    #[error("saliency {0} outside [0, 1]")]
    SaliencyOutOfRange(f64),
    #[error("invalid size parameters: {0}")]
    InvalidParams(String),
    #[error("target compression ratio {target} unreachable; achievable range is [{min}, 1]")]
    UnreachableTarget { target: f64, min: f64 },
    #[error("requested {requested} seeds but the domain has {available} occupied voxels")]
    TooManySeeds { requested: usize, available: usize },
    #[error("invalid FSQ configuration: {0}")]
    InvalidFsq(String),
    #[error("descriptor component {index} = {value} outside [-1, 1]")]
    ComponentOutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("code {code} out of range for codebook size {size}")]
    CodeOutOfRange { code: u64, size: u64 },
    #[error("supervoxel {0} is empty")]
    EmptyCell(usize),
    #[error("perturbation fraction {0} outside [0, 0.05]")]
    BadFraction(f64),
    #[error("predictor returned code {code} for vocabulary size {vocab}")]
    PredictorOutOfRange { code: u32, vocab: u32 },
    #[error("empty point set")]
    EmptyPointSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
