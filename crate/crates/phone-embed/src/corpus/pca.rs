//! PCA over feature frames, used to reduce high-dimensional bottleneck
//! features (850 raw dims in the reference setup) to a compact per-frame
//! representation, 40 dims by default.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::corpus::features::FeatureMatrix;
use crate::error::{Error, Result};

/// Default output dimensionality for bottleneck features.
pub const DEFAULT_PCA_DIMS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `in_dims x out_dims`, row-major; columns are orthonormal and ordered
    /// by descending eigenvalue.
    projection: Vec<f64>,
    in_dims: usize,
    out_dims: usize,
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Fits the top `out_dims` principal directions of the frame covariance.
    ///
    /// Sign convention: the largest-magnitude element of each column is made
    /// positive, so the decomposition is unique up to eigenvalue ties.
    pub fn fit<'a>(
        matrices: impl IntoIterator<Item = &'a FeatureMatrix>,
        out_dims: usize,
    ) -> Result<PcaModel> {
        let mut frames: Vec<&[f64]> = Vec::new();
        let mut in_dims = 0usize;
        let matrices: Vec<&FeatureMatrix> = matrices.into_iter().collect();
        for m in &matrices {
            if in_dims == 0 {
                in_dims = m.dims();
            } else if m.dims() != in_dims {
                return Err(Error::DimensionMismatch {
                    context: "pca fit",
                    expected: in_dims,
                    got: m.dims(),
                });
            }
            frames.extend(m.rows());
        }
        if out_dims == 0 || out_dims > in_dims {
            return Err(Error::invalid(format!(
                "pca out_dims must be in 1..={in_dims}, got {out_dims}"
            )));
        }
        let n = frames.len();
        if n <= out_dims {
            return Err(Error::invalid(format!(
                "pca needs more than {out_dims} frames, got {n}"
            )));
        }

        let mut mean = vec![0.0; in_dims];
        for row in &frames {
            for (i, v) in row.iter().enumerate() {
                mean[i] += v;
            }
        }
        for v in &mut mean {
            *v /= n as f64;
        }

        // population covariance of the centered frames
        let mut cov = DMatrix::<f64>::zeros(in_dims, in_dims);
        for row in &frames {
            for i in 0..in_dims {
                let di = row[i] - mean[i];
                for j in i..in_dims {
                    cov[(i, j)] += di * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..in_dims {
            for j in i..in_dims {
                let v = cov[(i, j)] / n as f64;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        let eigen = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..in_dims).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .partial_cmp(&eigen.eigenvalues[a])
                .expect("covariance eigenvalues are finite")
        });

        let mut projection = vec![0.0; in_dims * out_dims];
        let mut eigenvalues = Vec::with_capacity(out_dims);
        for (c, &src) in order.iter().take(out_dims).enumerate() {
            let column = eigen.eigenvectors.column(src);
            let mut peak = 0usize;
            for i in 1..in_dims {
                if column[i].abs() > column[peak].abs() {
                    peak = i;
                }
            }
            let sign = if column[peak] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..in_dims {
                projection[i * out_dims + c] = sign * column[i];
            }
            eigenvalues.push(eigen.eigenvalues[src]);
        }

        Ok(PcaModel {
            mean,
            projection,
            in_dims,
            out_dims,
            eigenvalues,
        })
    }

    pub fn in_dims(&self) -> usize {
        self.in_dims
    }

    pub fn out_dims(&self) -> usize {
        self.out_dims
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Kept eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Column `c` of the projection.
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.in_dims)
            .map(|i| self.projection[i * self.out_dims + c])
            .collect()
    }

    /// Projects a matrix: `out = (in - mean) . projection`.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.dims() != self.in_dims {
            return Err(Error::DimensionMismatch {
                context: "pca apply",
                expected: self.in_dims,
                got: matrix.dims(),
            });
        }
        let mut values = Vec::with_capacity(matrix.frames() * self.out_dims);
        for row in matrix.rows() {
            for c in 0..self.out_dims {
                let mut acc = 0.0;
                for i in 0..self.in_dims {
                    acc += (row[i] - self.mean[i]) * self.projection[i * self.out_dims + c];
                }
                values.push(acc);
            }
        }
        FeatureMatrix::new(matrix.frames(), self.out_dims, values)
    }
}
