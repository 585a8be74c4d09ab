//! Global cepstral mean/variance normalization.
//!
//! Statistics are accumulated over every frame of the training split and
//! applied to all splits, standardizing each dimension to zero mean and unit
//! variance. Population standard deviation, floored at [`STDDEV_FLOOR`] so a
//! constant dimension never divides by zero.

use serde::{Deserialize, Serialize};

use crate::corpus::features::FeatureMatrix;
use crate::error::{Error, Result};

/// Lower bound on the per-dimension standard deviation.
pub const STDDEV_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmvnStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    /// Frames accumulated while fitting.
    pub count: usize,
}

impl CmvnStats {
    /// Fits mean and population stddev over all frames of all matrices.
    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<CmvnStats> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sum_sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for m in matrices {
            if sum.is_empty() {
                sum = vec![0.0; m.dims()];
                sum_sq = vec![0.0; m.dims()];
            } else if m.dims() != sum.len() {
                return Err(Error::DimensionMismatch {
                    context: "cmvn fit",
                    expected: sum.len(),
                    got: m.dims(),
                });
            }
            for row in m.rows() {
                for (i, v) in row.iter().enumerate() {
                    sum[i] += v;
                    sum_sq[i] += v * v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid("cmvn fit needs at least one frame"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let stddev: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                var.sqrt().max(STDDEV_FLOOR)
            })
            .collect();
        Ok(CmvnStats {
            mean,
            stddev,
            count,
        })
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes a matrix: `out[t][i] = (in[t][i] - mean[i]) / stddev[i]`.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                context: "cmvn apply",
                expected: self.dims(),
                got: matrix.dims(),
            });
        }
        let dims = self.dims();
        let values = matrix
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % dims]) / self.stddev[i % dims])
            .collect();
        FeatureMatrix::new(matrix.frames(), dims, values)
    }

    /// Undoes [`CmvnStats::apply`]; exact where stddev is above the floor.
    pub fn invert(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        if matrix.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                context: "cmvn invert",
                expected: self.dims(),
                got: matrix.dims(),
            });
        }
        let dims = self.dims();
        let values = matrix
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.stddev[i % dims] + self.mean[i % dims])
            .collect();
        FeatureMatrix::new(matrix.frames(), dims, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_mean_and_population_stddev() {
        let m = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let stats = CmvnStats::fit([&m]).unwrap();
        assert_eq!(stats.mean, vec![1.0, 1.0]);
        assert_eq!(stats.stddev, vec![1.0, 1.0]);
        assert_eq!(stats.count, 2);
    }

    #[test]
    fn constant_dimension_clamps_to_floor() {
        let m = FeatureMatrix::from_rows(&[vec![5.0]]).unwrap();
        let stats = CmvnStats::fit([&m]).unwrap();
        assert_eq!(stats.mean, vec![5.0]);
        assert_eq!(stats.stddev, vec![STDDEV_FLOOR]);

        let zeros = FeatureMatrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let stats = CmvnStats::fit([&zeros]).unwrap();
        assert_eq!(stats.mean, vec![0.0]);
        assert_eq!(stats.stddev, vec![STDDEV_FLOOR]);
    }

    #[test]
    fn zero_frames_is_an_error() {
        assert!(CmvnStats::fit([]).is_err());
    }

    #[test]
    fn apply_examples() {
        let stats = CmvnStats {
            mean: vec![1.0, 1.0],
            stddev: vec![1.0, 1.0],
            count: 1,
        };
        let m = FeatureMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(stats.apply(&m).unwrap().values(), &[0.0, 0.0]);

        let stats = CmvnStats {
            mean: vec![1.0],
            stddev: vec![2.0],
            count: 1,
        };
        let m = FeatureMatrix::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(stats.apply(&m).unwrap().values(), &[1.0]);

        let mismatched = FeatureMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(stats.apply(&mismatched).is_err());
    }

    #[test]
    fn own_training_frames_standardize_to_zero_mean_unit_stddev() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|t| vec![(t as f64).sin() * 3.0 + 2.0, t as f64 * 0.1 - 1.0])
            .collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let stats = CmvnStats::fit([&m]).unwrap();
        let normed = stats.apply(&m).unwrap();
        let check = CmvnStats::fit([&normed]).unwrap();
        for d in 0..2 {
            assert!(check.mean[d].abs() < 1e-9, "mean {}", check.mean[d]);
            assert!((check.stddev[d] - 1.0).abs() < 1e-9, "stddev {}", check.stddev[d]);
        }
    }

    proptest! {
        #[test]
        fn invert_recovers_input_where_stddev_above_floor(
            rows in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 3), 2..20)
        ) {
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let stats = CmvnStats::fit([&m]).unwrap();
            let round = stats.invert(&stats.apply(&m).unwrap()).unwrap();
            for (a, b) in m.values().iter().zip(round.values()) {
                // constant dimensions hit the floor and still invert exactly:
                // (v - mean) / floor * floor + mean == v up to rounding
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
