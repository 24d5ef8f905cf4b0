//! Grid search with k-fold cross-validation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gbr::fit_gbr_raw;
use super::{Model, ModelFamily, ParamSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics;

/// Candidate values per hyperparameter. Grid points are enumerated
/// lexicographically: the first list varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub params: Vec<(String, Vec<f64>)>,
    pub cv_folds: usize,
}

impl HyperGrid {
    pub fn default_for(family: ModelFamily) -> Self {
        let params = match family {
            ModelFamily::Ridge => vec![("alpha".into(), vec![0.01, 0.1, 1.0, 10.0, 100.0])],
            ModelFamily::Gbr => vec![
                ("n_estimators".into(), vec![50.0, 100.0]),
                ("max_depth".into(), vec![2.0, 3.0]),
                ("learning_rate".into(), vec![0.05, 0.1]),
                ("huber_delta_quantile".into(), vec![0.9]),
                ("min_samples_leaf".into(), vec![5.0]),
            ],
        };
        Self {
            params,
            cv_folds: 5,
        }
    }

    pub fn points(&self) -> Result<Vec<ParamSet>> {
        if self.params.iter().any(|(_, values)| values.is_empty()) {
            return Err(Error::EmptyGrid);
        }
        let mut points = vec![ParamSet::default()];
        for (name, values) in &self.params {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut next = p.clone();
                        next.0.push((name.clone(), *v));
                        next
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

/// Fold sizes for `n` rows in `k` folds: the first `n mod k` folds hold one
/// extra row.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: ParamSet,
    pub best_score: f64,
    /// Mean validation R² per grid point, in grid order.
    pub scores: Vec<(ParamSet, f64)>,
}

/// Selects the grid point with the highest mean validation R². Ties go to
/// the earliest point in grid order.
pub fn grid_search_cv(
    train: &Dataset,
    grid: &HyperGrid,
    family: ModelFamily,
    seed: u64,
) -> Result<CvOutcome> {
    let points = grid.points()?;
    let k = grid.cv_folds;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("cv_folds {k} must be >= 2")));
    }
    let n = train.n_rows();
    if n < 2 * k {
        return Err(Error::TooFewRows { needed: 2 * k, have: n });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for size in fold_sizes(n, k) {
        folds.push(&order[start..start + size]);
        start += size;
    }

    let mut totals = vec![0.0; points.len()];
    for (f, valid_idx) in folds.iter().enumerate() {
        let fit_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let fit = train.subset(&fit_idx);
        let valid = train.subset(valid_idx);
        let scores = match family {
            ModelFamily::Ridge => fold_scores_independent(&points, family, &fit, &valid)?,
            ModelFamily::Gbr => fold_scores_gbr(&points, &fit, &valid)?,
        };
        for (t, s) in totals.iter_mut().zip(scores) {
            *t += s;
        }
    }

    let mut best = 0;
    let means: Vec<f64> = totals.iter().map(|t| t / k as f64).collect();
    for (i, m) in means.iter().enumerate() {
        if *m > means[best] {
            best = i;
        }
    }
    Ok(CvOutcome {
        best: points[best].clone(),
        best_score: means[best],
        scores: points.into_iter().zip(means).collect(),
    })
}

fn fold_scores_independent(
    points: &[ParamSet],
    family: ModelFamily,
    fit: &Dataset,
    valid: &Dataset,
) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let model = Model::fit(family, p, fit)?;
            metrics::r2(&valid.targets, &model.predict(&valid.features)?)
        })
        .collect()
}

/// Grid points that differ only in `n_estimators` share one boosting run;
/// the shorter ensembles are read off as prefixes of the longest. This gives
/// the same predictions as separate fits because nothing in an iteration
/// depends on the total tree count.
fn fold_scores_gbr(points: &[ParamSet], fit: &Dataset, valid: &Dataset) -> Result<Vec<f64>> {
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    let parsed = points
        .iter()
        .map(|p| p.gbr_params())
        .collect::<Result<Vec<_>>>()?;
    for (i, p) in parsed.iter().enumerate() {
        let key = vec![
            p.learning_rate.to_bits(),
            p.max_depth as u64,
            p.min_samples_leaf as u64,
            p.huber_delta_quantile.to_bits(),
        ];
        groups.entry(key).or_default().push(i);
    }
    let mut scores = vec![0.0; points.len()];
    for members in groups.values() {
        let longest = members
            .iter()
            .map(|&i| parsed[i].n_estimators)
            .max()
            .unwrap_or(0);
        let params = super::GbrParams {
            n_estimators: longest,
            ..parsed[members[0]]
        };
        let model = fit_gbr_raw(&fit.features, &fit.targets, &params)?;
        let stages: Vec<usize> = members.iter().map(|&i| parsed[i].n_estimators).collect();
        let staged = model.predict_staged(&valid.features, &stages)?;
        for (&i, preds) in members.iter().zip(staged) {
            scores[i] = metrics::r2(&valid.targets, &preds)?;
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn linear(n: usize) -> Dataset {
        let xs: Vec<f64> = (0..n * 2).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.chunks(2).map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        Dataset::new(DMatrix::from_row_slice(n, 2, &xs), ys, (0..n).collect()).unwrap()
    }

    #[test]
    fn fold_size_rule() {
        assert_eq!(fold_sizes(151, 5), vec![31, 30, 30, 30, 30]);
        assert_eq!(fold_sizes(10, 5), vec![2; 5]);
        assert_eq!(fold_sizes(13, 5), vec![3, 3, 3, 2, 2]);
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let grid = HyperGrid {
            params: vec![("a".into(), vec![1.0, 2.0]), ("b".into(), vec![10.0, 20.0])],
            cv_folds: 2,
        };
        let pts: Vec<String> = grid.points().unwrap().iter().map(|p| p.to_string()).collect();
        assert_eq!(pts, vec!["a=1;b=10", "a=1;b=20", "a=2;b=10", "a=2;b=20"]);
        assert_eq!(HyperGrid::default_for(ModelFamily::Gbr).points().unwrap().len(), 8);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let grid = HyperGrid {
            params: vec![("alpha".into(), vec![])],
            cv_folds: 5,
        };
        assert!(matches!(
            grid_search_cv(&linear(20), &grid, ModelFamily::Ridge, 0),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn single_candidate_wins() {
        let grid = HyperGrid {
            params: vec![("alpha".into(), vec![3.0])],
            cv_folds: 5,
        };
        let out = grid_search_cv(&linear(30), &grid, ModelFamily::Ridge, 1).unwrap();
        assert_eq!(out.best.get("alpha"), Some(3.0));
    }

    #[test]
    fn small_alpha_dominates_on_noiseless_data() {
        let grid = HyperGrid {
            params: vec![("alpha".into(), vec![1e-6, 1e6])],
            cv_folds: 5,
        };
        let out = grid_search_cv(&linear(40), &grid, ModelFamily::Ridge, 9).unwrap();
        assert_eq!(out.best.get("alpha"), Some(1e-6));
    }

    #[test]
    fn too_few_rows() {
        let grid = HyperGrid::default_for(ModelFamily::Ridge);
        assert!(matches!(
            grid_search_cv(&linear(9), &grid, ModelFamily::Ridge, 0),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn gbr_shared_runs_match_separate_fits() {
        let ds = crate::data::synthesize(60, 3, 0.2, 8).unwrap();
        let grid = HyperGrid {
            params: vec![
                ("n_estimators".into(), vec![5.0, 15.0]),
                ("max_depth".into(), vec![2.0]),
                ("min_samples_leaf".into(), vec![3.0]),
            ],
            cv_folds: 3,
        };
        let out = grid_search_cv(&ds, &grid, ModelFamily::Gbr, 4).unwrap();
        // recompute fold scores with one model per grid point
        let mut order: Vec<usize> = (0..60).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
        let points = grid.points().unwrap();
        for (pi, p) in points.iter().enumerate() {
            let mut total = 0.0;
            for f in 0..3 {
                let valid: Vec<usize> = order[f * 20..(f + 1) * 20].to_vec();
                let fit: Vec<usize> = order
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i / 20 != f)
                    .map(|(_, v)| *v)
                    .collect();
                let m = Model::fit(ModelFamily::Gbr, p, &ds.subset(&fit)).unwrap();
                let v = ds.subset(&valid);
                total += metrics::r2(&v.targets, &m.predict(&v.features).unwrap()).unwrap();
            }
            assert!((out.scores[pi].1 - total / 3.0).abs() < 1e-12);
        }
    }
}
