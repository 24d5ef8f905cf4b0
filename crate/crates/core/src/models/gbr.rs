//! Gradient boosting with Huber loss over absolute-error regression trees.
//!
//! Each iteration:
//! 1. `delta` is the configured quantile of the current absolute residuals;
//! 2. the tree is grown on the clipped residuals (the negative Huber
//!    gradient) with the absolute-error split criterion;
//! 3. every leaf value is replaced by the exact Huber-loss minimizer over the
//!    raw residuals of the rows in that leaf;
//! 4. predictions move by `learning_rate` times the tree output.
//!
//! Step 3 makes each leaf update a descent step on a convex function, so the
//! training loss at the iteration's `delta` cannot increase. The fit checks
//! this and reports a violation as [`Error::LossIncreased`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tree::{fit_with_assignment, Presorted, RegressionTree};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::{median, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbrParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub huber_delta_quantile: f64,
}

impl Default for GbrParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 5,
            huber_delta_quantile: 0.9,
        }
    }
}

/// Training loss around one boosting iteration, both at that iteration's delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberStep {
    pub delta: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrModel {
    pub initial_value: f64,
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub huber_delta_quantile: f64,
    pub n_estimators: usize,
    pub n_features: usize,
    pub loss_trace: Vec<HuberStep>,
}

pub fn huber(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub fn mean_huber(targets: &[f64], preds: &[f64], delta: f64) -> f64 {
    let total: f64 = targets
        .iter()
        .zip(preds)
        .map(|(y, p)| huber(y - p, delta))
        .sum();
    total / targets.len() as f64
}

/// Minimizes `sum huber(r_i - c, delta)` over `c` by bisection on the
/// (monotone) derivative.
fn huber_location(residuals: &[f64], delta: f64) -> f64 {
    if delta <= 0.0 || residuals.is_empty() {
        return 0.0;
    }
    let slope = |c: f64| -> f64 { residuals.iter().map(|r| (r - c).clamp(-delta, delta)).sum() };
    let mut lo = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let objective = |c: f64| -> f64 { residuals.iter().map(|r| huber(r - c, delta)).sum() };
    if objective(lo) <= objective(hi) {
        lo
    } else {
        hi
    }
}

pub fn fit_gbr(train: &Dataset, params: &GbrParams) -> Result<GbrModel> {
    fit_gbr_raw(&train.features, &train.targets, params)
}

pub(crate) fn fit_gbr_raw(
    features: &DMatrix<f64>,
    targets: &[f64],
    params: &GbrParams,
) -> Result<GbrModel> {
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "learning_rate {} must lie in (0, 1]",
            params.learning_rate
        )));
    }
    if !(params.huber_delta_quantile > 0.0 && params.huber_delta_quantile < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "huber_delta_quantile {} must lie in (0, 1)",
            params.huber_delta_quantile
        )));
    }
    let n = targets.len();
    if n < 2 * params.min_samples_leaf.max(1) {
        return Err(Error::TooFewRows {
            needed: 2 * params.min_samples_leaf.max(1),
            have: n,
        });
    }

    let initial_value = median(targets).ok_or(Error::Empty)?;
    let mut preds = vec![initial_value; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut loss_trace = Vec::with_capacity(params.n_estimators);
    let presorted = Presorted::new(features);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| features.row(i).iter().copied().collect())
        .collect();

    for iteration in 0..params.n_estimators {
        let residuals: Vec<f64> = targets.iter().zip(&preds).map(|(y, p)| y - p).collect();
        let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        let delta = quantile(&abs, params.huber_delta_quantile).expect("non-empty");
        let gradient: Vec<f64> = residuals.iter().map(|r| r.clamp(-delta, delta)).collect();

        let (mut tree, leaves) =
            fit_with_assignment(features, &presorted, &gradient, params.max_depth, params.min_samples_leaf)?;
        for (leaf, members) in &leaves {
            let r: Vec<f64> = members.iter().map(|&i| residuals[i]).collect();
            tree.set_leaf_value(*leaf, huber_location(&r, delta));
        }

        let before = mean_huber(targets, &preds, delta);
        for (p, row) in preds.iter_mut().zip(&rows) {
            *p += params.learning_rate * tree.predict_row(row);
        }
        let after = mean_huber(targets, &preds, delta);
        if after > before + 1e-12 * before.max(1.0) {
            return Err(Error::LossIncreased {
                iteration,
                before,
                after,
            });
        }
        loss_trace.push(HuberStep {
            delta,
            before,
            after,
        });
        trees.push(tree);
    }

    Ok(GbrModel {
        initial_value,
        trees,
        learning_rate: params.learning_rate,
        huber_delta_quantile: params.huber_delta_quantile,
        n_estimators: params.n_estimators,
        n_features: features.ncols(),
        loss_trace,
    })
}

impl GbrModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.initial_value
            + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }

    /// Predictions using only the first `stages[k]` trees, for each k.
    pub fn predict_staged(&self, features: &DMatrix<f64>, stages: &[usize]) -> Result<Vec<Vec<f64>>> {
        if features.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: features.ncols(),
            });
        }
        let mut out = vec![Vec::with_capacity(features.nrows()); stages.len()];
        for i in 0..features.nrows() {
            let row: Vec<f64> = features.row(i).iter().copied().collect();
            let mut acc = 0.0;
            let mut used = 0;
            let mut order: Vec<usize> = (0..stages.len()).collect();
            order.sort_by_key(|&k| stages[k]);
            let mut at_stage = vec![0.0; stages.len()];
            for k in order {
                let target = stages[k].min(self.trees.len());
                while used < target {
                    acc += self.trees[used].predict_row(&row);
                    used += 1;
                }
                at_stage[k] = self.initial_value + self.learning_rate * acc;
            }
            for (k, v) in at_stage.into_iter().enumerate() {
                out[k].push(v);
            }
        }
        Ok(out)
    }

    /// True when every iteration's loss after the update is at most the loss
    /// before it (at that iteration's delta).
    pub fn loss_is_monotone(&self) -> bool {
        self.loss_trace
            .iter()
            .all(|s| s.after <= s.before + 1e-12 * s.before.max(1.0))
    }
}
