//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {a_rows}x{a_cols} is incompatible with {b_rows}x{b_cols}")]
    ShapeMismatch {
        op: &'static str,
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },

    #[error("matrix data length {len} does not match {rows}x{cols}")]
    BadDataLength { rows: usize, cols: usize, len: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric within {tol}: |m[{i}][{j}] - m[{j}][{i}]| = {delta}")]
    NotSymmetric { i: usize, j: usize, delta: f64, tol: f64 },

    #[error("eigensolver did not converge within {sweeps} sweeps (off-diagonal norm {off})")]
    EigNoConvergence { sweeps: usize, off: f64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("row {row} has zero norm; cosine similarity is undefined")]
    ZeroNormRow { row: usize },

    #[error("embedding must have an even number of rows >= 2, got {rows}")]
    BadPairing { rows: usize },

    #[error("temperature must be positive, got {tau}")]
    BadTemperature { tau: f64 },

    #[error("layer {index} ({layer}): {reason}")]
    LayerShape { index: usize, layer: String, reason: String },

    #[error("encoder input shape ({c},{h},{w}) does not match expected ({ec},{eh},{ew})")]
    InputShape { c: usize, h: usize, w: usize, ec: usize, eh: usize, ew: usize },

    #[error("layer index {index} out of range for a {layers}-layer encoder")]
    LayerIndex { index: usize, layers: usize },

    #[error("forward cache does not match: {reason}")]
    CacheMismatch { reason: String },

    #[error("dataset file missing: {path}")]
    MissingFile { path: PathBuf },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    BadFileSize { path: PathBuf, expected: u64, actual: u64 },

    #[error("{path}: record {record} has {kind} label {value}, limit is {limit}")]
    LabelRange { path: PathBuf, record: usize, kind: &'static str, value: u8, limit: u8 },

    #[error("batch size {batch} exceeds dataset size {n}")]
    BatchTooLarge { batch: usize, n: usize },

    #[error("batch size must be at least 2, got {batch}")]
    BatchTooSmall { batch: usize },

    #[error("invalid configuration: {reason}")]
    Config { reason: String },

    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("k = {k} is invalid here (limit {limit})")]
    BadK { k: usize, limit: usize },

    #[error("need at least two distinct classes, found {found}")]
    SingleClass { found: usize },

    #[error("label count {labels} does not match row count {rows}")]
    LabelCount { labels: usize, rows: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
