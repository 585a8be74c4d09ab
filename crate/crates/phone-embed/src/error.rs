use std::path::PathBuf;

use crate::corpus::View;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed manifest record: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate segment id `{id}`")]
    DuplicateSegment { id: String },

    #[error("segment `{id}` has no `{view}` view")]
    MissingView { id: String, view: View },

    #[error("cannot resolve `{view}` view of segment `{id}`: {path} is missing")]
    UnresolvedView {
        id: String,
        view: View,
        path: PathBuf,
    },

    #[error("{path}: bad magic bytes, expected `{expected}`")]
    BadMagic { path: PathBuf, expected: String },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: truncated payload, need {expected} bytes but only {found} remain")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {trailing} trailing bytes after payload")]
    TrailingBytes { path: PathBuf, trailing: usize },

    #[error("non-finite value in {context} at row {row}, column {col}")]
    NonFinite {
        context: String,
        row: usize,
        col: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown phone `{0}`")]
    UnknownPhone(String),

    #[error("invalid attribute inventory: {0}")]
    InvalidInventory(String),

    #[error("invalid posterior lattice: {0}")]
    InvalidLattice(String),

    #[error("phone span [{start}, {end}) is out of range for a {frames}-frame lattice")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        frames: usize,
    },

    #[error("cosine distance is undefined for a zero-norm embedding")]
    ZeroNormEmbedding,

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("forward tape does not match the given parameters: {0}")]
    TapeMismatch(String),

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
