use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Ridge regression on standardized features with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub theta: Vec<f64>,
    pub intercept: f64,
    pub standardizer: Standardizer,
    pub alpha: f64,
}

/// Solves `(ZᵀZ + αI) θ = Zᵀ(y - ȳ)` where `Z` is the standardized design.
pub fn fit_ridge(train: &Dataset, alpha: f64) -> Result<RidgeModel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge alpha {alpha}")));
    }
    let (n, d) = (train.n_rows(), train.n_features());
    if n < d + 1 {
        return Err(Error::TooFewRows { needed: d + 1, have: n });
    }
    let standardizer = Standardizer::fit(&train.features)?;
    let z = standardizer.transform(&train.features)?;
    let y_mean = train.targets.iter().sum::<f64>() / n as f64;
    let centered = DVector::from_iterator(n, train.targets.iter().map(|y| y - y_mean));

    let gram = z.tr_mul(&z) + DMatrix::<f64>::identity(d, d) * alpha;
    let rhs = z.tr_mul(&centered);
    let theta = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::SingularSystem)?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(RidgeModel {
        theta: theta.iter().copied().collect(),
        intercept: y_mean,
        standardizer,
        alpha,
    })
}

impl RidgeModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let s = &self.standardizer;
        self.intercept
            + x.iter()
                .zip(&self.theta)
                .enumerate()
                .map(|(j, (v, t))| (v - s.means[j]) / s.sds[j] * t)
                .sum::<f64>()
    }

    /// Penalized objective `‖y − Zθ − b‖² / n + α‖θ‖² / n` on `data`.
    pub fn objective(&self, data: &Dataset) -> Result<f64> {
        let z = self.standardizer.transform(&data.features)?;
        let n = data.n_rows() as f64;
        let mut sse = 0.0;
        for (i, y) in data.targets.iter().enumerate() {
            let pred: f64 = self.intercept
                + z.row(i).iter().zip(&self.theta).map(|(a, b)| a * b).sum::<f64>();
            sse += (y - pred).powi(2);
        }
        let penalty: f64 = self.theta.iter().map(|t| t * t).sum();
        Ok((sse + self.alpha * penalty) / n)
    }
}
