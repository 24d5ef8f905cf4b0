//! Regression models behind one prediction contract, plus tuning by
//! cross-validation.

pub mod cv;
pub mod gbr;
pub mod ridge;
pub mod standardize;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cv::{fold_sizes, grid_search_cv, CvOutcome, HyperGrid};
pub use gbr::{fit_gbr, GbrModel, GbrParams};
pub use ridge::{fit_ridge, RidgeModel};
pub use standardize::Standardizer;
pub use tree::{fit_tree_mae, RegressionTree};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Ridge,
    Gbr,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Ridge => "ridge",
            ModelFamily::Gbr => "gbr",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ridge" => Ok(ModelFamily::Ridge),
            "gbr" => Ok(ModelFamily::Gbr),
            other => Err(Error::InvalidArgument(format!(
                "unknown model family `{other}` (expected ridge or gbr)"
            ))),
        }
    }
}

/// Named hyperparameter values in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet(pub Vec<(String, f64)>);

impl ParamSet {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(n, v)| (n.as_str(), *v))
    }

    fn check_names(&self, family: ModelFamily, allowed: &[&str]) -> Result<()> {
        match self.0.iter().find(|(n, _)| !allowed.contains(&n.as_str())) {
            Some((name, _)) => Err(Error::UnknownHyperparameter {
                name: name.clone(),
                family: family.to_string(),
            }),
            None => Ok(()),
        }
    }

    pub fn ridge_alpha(&self) -> Result<f64> {
        self.check_names(ModelFamily::Ridge, &["alpha"])?;
        Ok(self.get("alpha").unwrap_or(1.0))
    }

    pub fn gbr_params(&self) -> Result<GbrParams> {
        self.check_names(
            ModelFamily::Gbr,
            &[
                "n_estimators",
                "learning_rate",
                "max_depth",
                "min_samples_leaf",
                "huber_delta_quantile",
            ],
        )?;
        let d = GbrParams::default();
        let count = |name: &str, default: usize| -> Result<usize> {
            match self.get(name) {
                None => Ok(default),
                Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
                Some(v) => Err(Error::InvalidArgument(format!("{name} = {v} is not a count"))),
            }
        };
        Ok(GbrParams {
            n_estimators: count("n_estimators", d.n_estimators)?,
            learning_rate: self.get("learning_rate").unwrap_or(d.learning_rate),
            max_depth: count("max_depth", d.max_depth)?,
            min_samples_leaf: count("min_samples_leaf", d.min_samples_leaf)?,
            huber_delta_quantile: self
                .get("huber_delta_quantile")
                .unwrap_or(d.huber_delta_quantile),
        })
    }
}

impl fmt::Display for ParamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(n, v)| format!("{n}={v}")).collect();
        f.write_str(&parts.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Model {
    Ridge(RidgeModel),
    Gbr(GbrModel),
}

impl Model {
    pub fn fit(family: ModelFamily, params: &ParamSet, train: &Dataset) -> Result<Model> {
        match family {
            ModelFamily::Ridge => fit_ridge(train, params.ridge_alpha()?).map(Model::Ridge),
            ModelFamily::Gbr => fit_gbr(train, &params.gbr_params()?).map(Model::Gbr),
        }
    }

    pub fn family(&self) -> ModelFamily {
        match self {
            Model::Ridge(_) => ModelFamily::Ridge,
            Model::Gbr(_) => ModelFamily::Gbr,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Ridge(m) => m.theta.len(),
            Model::Gbr(m) => m.n_features,
        }
    }

    /// Caller guarantees `x.len() == self.n_features()`.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Ridge(m) => m.predict_row(x),
            Model::Gbr(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        predict(self, features)
    }
}

pub fn predict(model: &Model, features: &DMatrix<f64>) -> Result<Vec<f64>> {
    if features.ncols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: features.ncols(),
        });
    }
    let mut row = vec![0.0; features.ncols()];
    Ok((0..features.nrows())
        .map(|i| {
            row.iter_mut()
                .enumerate()
                .for_each(|(j, v)| *v = features[(i, j)]);
            model.predict_row(&row)
        })
        .collect())
}

/// A fitted model together with its held-out error statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: Model,
    pub params: ParamSet,
    /// Held-out mean squared error, in squared log-price units.
    pub sigma_f2: f64,
    pub holdout_r2: f64,
    pub holdout_mae: f64,
}

pub fn train_and_evaluate(
    train: &Dataset,
    holdout: &Dataset,
    family: ModelFamily,
    params: &ParamSet,
) -> Result<TrainedModel> {
    if holdout.n_rows() == 0 {
        return Err(Error::Empty);
    }
    let model = Model::fit(family, params, train)?;
    let preds = model.predict(&holdout.features)?;
    Ok(TrainedModel {
        sigma_f2: metrics::mse(&holdout.targets, &preds)?,
        holdout_r2: metrics::r2(&holdout.targets, &preds)?,
        holdout_mae: metrics::mae(&holdout.targets, &preds)?,
        params: params.clone(),
        model,
    })
}
