use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    MagicMismatch { path: PathBuf, expected: u32, found: u32 },

    #[error("truncated payload in {path}: needed {needed} bytes, found {found}")]
    TruncatedPayload { path: PathBuf, needed: usize, found: usize },

    #[error("truncated bag container: record for bag index {bag_index} is incomplete")]
    TruncatedBag { bag_index: usize },

    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("unsupported partition scheme: {0}")]
    UnsupportedScheme(String),

    #[error("infeasible partition: client {client} cannot be satisfied ({reason})")]
    InfeasiblePartition { client: usize, reason: String },

    #[error("degenerate clustering: {requested} clusters requested but only {distinct} distinct instance vectors")]
    DegenerateClustering { requested: usize, distinct: usize },

    #[error("degenerate similarity: all client profiles coincide")]
    DegenerateSimilarity,

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("eigendecomposition did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNotConverged { sweeps: usize, off_norm: f64 },

    #[error("cannot draw {requested} items: kernel rank is {rank}")]
    InfeasibleK { requested: usize, rank: usize },

    #[error("empty shard{}", .0.map(|c| format!(" for client {c}")).unwrap_or_default())]
    EmptyShard(Option<usize>),

    #[error("aggregation weights sum to zero")]
    ZeroTotal,

    #[error("non-finite model weights: {0}")]
    NonFinite(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
