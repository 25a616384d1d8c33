use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the evaluation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),

    #[error("bad magic bytes, expected \"LSTK\"")]
    BadMagic,

    #[error("unsupported LSTK version {0}")]
    UnsupportedVersion(u32),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),

    #[error("aggregation has {weights} logits but the stack has {layers} layers")]
    LayerCountMismatch { weights: usize, layers: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("posterior matrix invalid: {0}")]
    InvalidPosteriors(String),

    #[error("target of length {target_len} needs at least {required} frames, got {frames}")]
    TargetTooLong {
        target_len: usize,
        required: usize,
        frames: usize,
    },

    #[error("invalid CTC target: {0}")]
    InvalidTarget(String),

    #[error("entities overlap at transcript position {0}")]
    OverlappingEntities(usize),

    #[error("range {start}..{end} out of bounds for {len} tokens")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },

    #[error("answer range {start}..{end} invalid for a document of {len} tokens")]
    AnswerOutOfBounds { start: usize, end: usize, len: usize },

    #[error("reserved token {0:?} used as an ordinary word")]
    ReservedToken(String),

    #[error("unknown entity tag {0:?}")]
    UnknownTag(String),

    #[error("empty reference")]
    EmptyReference,

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("hypothesis and reference lengths differ: {hyp} vs {reference}")]
    LengthMismatch { hyp: usize, reference: usize },

    #[error("empty dev set")]
    EmptyDevSet,

    #[error("invalid offset grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: probe expects {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing features for utterance {0:?}")]
    MissingFeatures(String),

    #[error("missing hypothesis for utterance {0:?}")]
    MissingHypothesis(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("submission already exists for {0}; use force to replace it")]
    DuplicateSubmission(String),

    #[error("no submissions for {0}")]
    EmptyBoard(String),

    #[error("board is locked by another writer: {0}")]
    Locked(PathBuf),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by the CLI to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::DuplicateId(_)
            | Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::DimensionMismatch(_)
            | Error::NonFiniteValue(_)
            | Error::UnknownTag(_)
            | Error::UnknownClass(_)
            | Error::Validation(_)
            | Error::Json(_) => ErrorKind::Schema,
            Error::MissingFeatures(_) | Error::MissingHypothesis(_) | Error::MissingInput(_) => ErrorKind::MissingInput,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorKind::MissingInput,
            _ => ErrorKind::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Schema,
    MissingInput,
    Other,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
