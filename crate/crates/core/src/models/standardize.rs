use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-wise zero-mean, unit-variance scaling (population sd).
/// Constant columns keep sd = 1 so they map to all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &DMatrix<f64>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::TooFewRows { needed: 2, have: n });
        }
        let mut means = Vec::with_capacity(features.ncols());
        let mut sds = Vec::with_capacity(features.ncols());
        for col in features.column_iter() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            means.push(mean);
            sds.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Ok(Self { means, sds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: features.ncols(),
            });
        }
        Ok(DMatrix::from_fn(features.nrows(), features.ncols(), |i, j| {
            (features[(i, j)] - self.means[j]) / self.sds[j]
        }))
    }

    pub fn inverse_transform(&self, scaled: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if scaled.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: scaled.ncols(),
            });
        }
        Ok(DMatrix::from_fn(scaled.nrows(), scaled.ncols(), |i, j| {
            scaled[(i, j)] * self.sds[j] + self.means[j]
        }))
    }
}
