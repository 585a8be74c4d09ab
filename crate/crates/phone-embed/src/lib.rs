//! Phone-level embedding models for mispronunciation verification.
//!
//! The crate covers the full pipeline:
//!
//! - [`corpus`]: manifests, binary feature files, CMVN, fixed-length padding,
//!   speech-attribute patterns, PCA, and a deterministic synthetic corpus
//!   generator for desk-scale experiments.
//! - [`gop`]: goodness-of-pronunciation scoring from frame posterior lattices.
//! - [`net`]: a stacked bidirectional LSTM embedding network with exact
//!   analytic backpropagation through time and a finite-difference checker.
//! - [`losses`]: the cosine-distance contrastive objectives (single-view
//!   triplet loss and the two cross-view objectives) with embedding gradients.
//! - [`train`]: triplet/cross-view sampling, the Adadelta optimizer, and the
//!   single-view and multi-view training loops with periodic AP evaluation.
//! - [`eval`]: same/different phone discrimination AP, template-based
//!   verification, and the FRR/FAR/DA metric suite.
//!
//! Everything is deterministic given explicit seeds, including batch-parallel
//! gradient computation (enabled by the default `parallel` feature; disabling
//! it falls back to sequential loops with identical results).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gop;
pub(crate) mod io;
pub mod losses;
pub mod net;
pub mod train;

pub use error::{Error, Result};

/// Crate version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 digest of a byte slice, hex-encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    io::sha256_hex(bytes)
}

/// SHA-256 digest of a file, hex-encoded.
pub fn sha256_file(path: &std::path::Path) -> Result<String> {
    io::sha256_file(path)
}

/// Digest of a directory tree: every regular file in sorted relative-path
/// order contributes its path, length, and bytes. Changes iff any byte of
/// any file (or the file set) changes.
pub fn digest_dir(path: &std::path::Path) -> Result<String> {
    io::digest_dir(path)
}

/// Writes a file atomically (temp file in the same directory + rename).
pub fn atomic_write(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    io::atomic_write(path, bytes)
}
