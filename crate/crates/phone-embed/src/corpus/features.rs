//! Dense per-segment feature matrices and their binary file format.
//!
//! On disk a feature file is `PHNF`, version `u32` LE, frames `u32` LE,
//! dims `u32` LE, then `frames * dims` `f32` LE values in row-major order.
//! In memory everything is `f64`; the widening cast is exact, so a
//! read-write round trip is byte-identical.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io;

/// Number of frames every acoustic/bottleneck segment is padded or truncated
/// to before entering an embedding model.
pub const DEFAULT_TARGET_FRAMES: usize = 58;

/// A `frames x dims` matrix of finite values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    dims: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix, validating shape and finiteness.
    pub fn new(frames: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if frames == 0 || dims == 0 {
            return Err(Error::invalid(format!(
                "feature matrix must be at least 1x1, got {frames}x{dims}"
            )));
        }
        if values.len() != frames * dims {
            return Err(Error::DimensionMismatch {
                context: "feature matrix values",
                expected: frames * dims,
                got: values.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "feature matrix".to_string(),
                    row: i / dims,
                    col: i % dims,
                });
            }
        }
        Ok(FeatureMatrix {
            frames,
            dims,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let frames = rows.len();
        let dims = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(frames * dims);
        for row in rows {
            if row.len() != dims {
                return Err(Error::DimensionMismatch {
                    context: "feature matrix row",
                    expected: dims,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        FeatureMatrix::new(frames, dims, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dims)
    }
}

/// Reads a feature matrix from the binary `PHNF` format.
pub fn read_feature_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = io::read_file(path)?;
    let mut r = io::Reader::new(path, &bytes);
    r.expect_magic(io::FEATURE_MAGIC)?;
    r.expect_version()?;
    let frames = r.read_u32()? as usize;
    let dims = r.read_u32()? as usize;
    if frames == 0 || dims == 0 {
        return Err(Error::invalid(format!(
            "{}: feature matrix must be at least 1x1, got {frames}x{dims}",
            path.display()
        )));
    }
    let raw = r.read_f32s(frames * dims)?;
    r.finish()?;
    for (i, v) in raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: path.display().to_string(),
                row: i / dims,
                col: i % dims,
            });
        }
    }
    let values = raw.into_iter().map(f64::from).collect();
    // finiteness already checked on the f32 payload
    Ok(FeatureMatrix {
        frames,
        dims,
        values,
    })
}

/// Serializes a feature matrix to the binary format (values narrowed to f32).
pub fn feature_matrix_bytes(matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(16 + matrix.values.len() * 4);
    buf.extend_from_slice(io::FEATURE_MAGIC);
    io::push_u32(&mut buf, io::FORMAT_VERSION);
    io::push_u32(&mut buf, matrix.frames as u32);
    io::push_u32(&mut buf, matrix.dims as u32);
    for (i, v) in matrix.values.iter().enumerate() {
        let narrowed = *v as f32;
        if !narrowed.is_finite() {
            return Err(Error::NonFinite {
                context: "feature matrix narrowed to f32".to_string(),
                row: i / matrix.dims,
                col: i % matrix.dims,
            });
        }
        io::push_f32(&mut buf, narrowed);
    }
    Ok(buf)
}

/// Writes a feature matrix atomically.
pub fn write_feature_matrix(path: &Path, matrix: &FeatureMatrix) -> Result<()> {
    io::atomic_write(path, &feature_matrix_bytes(matrix)?)
}

/// Pads or truncates to exactly `target_frames` rows.
///
/// Short inputs get zero rows appended at the end; long inputs keep the
/// centered window, dropping `floor((frames - target) / 2)` rows at the head.
pub fn pad_or_truncate(matrix: &FeatureMatrix, target_frames: usize) -> FeatureMatrix {
    assert!(target_frames >= 1, "target_frames must be at least 1");
    let dims = matrix.dims;
    if matrix.frames == target_frames {
        return matrix.clone();
    }
    let mut values = Vec::with_capacity(target_frames * dims);
    if matrix.frames < target_frames {
        values.extend_from_slice(&matrix.values);
        values.resize(target_frames * dims, 0.0);
    } else {
        let head = (matrix.frames - target_frames) / 2;
        values.extend_from_slice(&matrix.values[head * dims..(head + target_frames) * dims]);
    }
    FeatureMatrix {
        frames: target_frames,
        dims,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(FeatureMatrix::new(0, 3, vec![]).is_err());
        assert!(FeatureMatrix::new(1, 0, vec![]).is_err());
        let err = FeatureMatrix::new(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { col: 1, .. }));
    }

    #[test]
    fn round_trips_through_the_binary_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.phnf");
        let m = matrix(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        write_feature_matrix(&path, &m).unwrap();
        let back = read_feature_matrix(&path).unwrap();
        assert_eq!(back.frames(), 2);
        assert_eq!(back.dims(), 3);
        assert_eq!(back, m);
        // write -> read -> write is byte-identical
        let first = std::fs::read(&path).unwrap();
        let again = feature_matrix_bytes(&back).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn header_defines_the_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.phnf");
        let m = FeatureMatrix::new(2, 3, (0..6).map(f64::from).collect()).unwrap();
        write_feature_matrix(&path, &m).unwrap();
        let back = read_feature_matrix(&path).unwrap();
        assert_eq!((back.frames(), back.dims()), (2, 3));
        assert_eq!(back.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn distinct_errors_for_magic_truncation_and_nan() {
        let dir = tempfile::tempdir().unwrap();

        let bad_magic = dir.path().join("magic.phnf");
        std::fs::write(&bad_magic, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            read_feature_matrix(&bad_magic).unwrap_err(),
            Error::BadMagic { .. }
        ));

        // header claims 4 floats, payload holds 3
        let truncated = dir.path().join("short.phnf");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PHNF");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for v in [1f32, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&truncated, &bytes).unwrap();
        assert!(matches!(
            read_feature_matrix(&truncated).unwrap_err(),
            Error::Truncated { .. }
        ));

        let nan = dir.path().join("nan.phnf");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PHNF");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&nan, &bytes).unwrap();
        assert!(matches!(
            read_feature_matrix(&nan).unwrap_err(),
            Error::NonFinite { .. }
        ));

        let version = dir.path().join("v9.phnf");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PHNF");
        bytes.extend_from_slice(&9u32.to_le_bytes());
        std::fs::write(&version, &bytes).unwrap();
        assert!(matches!(
            read_feature_matrix(&version).unwrap_err(),
            Error::UnsupportedVersion { version: 9, .. }
        ));
    }

    #[test]
    fn pad_identity_at_target_length() {
        let m = FeatureMatrix::new(58, 13, vec![0.5; 58 * 13]).unwrap();
        assert_eq!(pad_or_truncate(&m, 58), m);
    }

    #[test]
    fn pad_appends_zero_rows_at_the_end() {
        let m = FeatureMatrix::new(10, 13, vec![1.0; 130]).unwrap();
        let padded = pad_or_truncate(&m, 58);
        assert_eq!(padded.frames(), 58);
        for t in 0..10 {
            assert_eq!(padded.row(t), m.row(t));
        }
        for t in 10..58 {
            assert!(padded.row(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn truncation_keeps_the_centered_window() {
        // 60 frames -> drop floor((60-58)/2) = 1 head row, keep rows 1..59
        let rows: Vec<Vec<f64>> = (0..60).map(|t| vec![t as f64; 13]).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let cut = pad_or_truncate(&m, 58);
        assert_eq!(cut.frames(), 58);
        assert_eq!(cut.row(0), m.row(1));
        assert_eq!(cut.row(57), m.row(58));
    }

    proptest! {
        #[test]
        fn pad_is_idempotent_at_target(frames in 1usize..120, dims in 1usize..8, target in 1usize..90) {
            let values: Vec<f64> = (0..frames * dims).map(|i| (i as f64).sin()).collect();
            let m = FeatureMatrix::new(frames, dims, values).unwrap();
            let once = pad_or_truncate(&m, target);
            let twice = pad_or_truncate(&once, target);
            prop_assert_eq!(once, twice);
        }
    }
}
