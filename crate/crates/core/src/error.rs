//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("record {id}: illegal character {ch:?} at offset {offset}")]
    IllegalChar { id: String, ch: char, offset: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid {name}: {msg}")]
    InvalidArgument { name: &'static str, msg: String },

    #[error("sequence {id} has {len} residues; {len} + [CLS] exceeds max_len {max_len}")]
    SequenceTooLong {
        id: String,
        len: usize,
        max_len: usize,
    },

    #[error("token id {id} outside vocabulary (size {size})")]
    UnknownTokenId { id: u32, size: usize },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("softmax row {row} has no unmasked column")]
    AllMaskedRow { row: usize },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("labels contain no supervised positions")]
    NoSupervisedPositions,

    #[error("run {run}, epoch {epoch}: loss is not finite, aborting")]
    Diverged { run: usize, epoch: usize },

    #[error("bad magic bytes (expected GBRT)")]
    BadMagic,

    #[error("unsupported container version {found}")]
    UnsupportedVersion { found: u32 },

    #[error("unsupported dtype {found:?} in container")]
    UnsupportedDtype { found: String },

    #[error("container header line {line}: {msg}")]
    HeaderParse { line: usize, msg: String },

    #[error("tensor {name}: payload offsets overlap or are out of order")]
    OverlappingOffsets { name: String },

    #[error("truncated payload: header declares {expected} bytes, file has {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("checkpoint was written with a different vocabulary (hash mismatch)")]
    VocabHashMismatch,

    #[error("svm training requires at least two distinct labels")]
    SingleClass,

    #[error("perplexity {perplexity} must be smaller than the number of points {n}")]
    PerplexityTooLarge { perplexity: f64, n: usize },

    #[error("only {eligible} eligible attention columns, need {k}")]
    TooFewColumns { eligible: usize, k: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
