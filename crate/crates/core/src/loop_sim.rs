//! The closed-loop experiment: a model trained on a sliding window prices
//! incoming rows, users partly adopt those prices, and the adopted prices
//! replace the oldest rows of the window the next model is trained on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split, window_capacity, window_from, Dataset, SplitSpec, WindowRow};
use crate::error::{Error, Result};
use crate::models::{grid_search_cv, train_and_evaluate, HyperGrid, ModelFamily, ParamSet, TrainedModel};
use crate::seed::SeedBuilder;

/// How users react to a price estimate: with probability `p` they adopt a
/// price drawn from `N(prediction, s * sigma_f2)`, otherwise they keep their
/// own price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserDecisionModel {
    pub p: f64,
    pub s: f64,
    pub seed: u64,
}

impl UserDecisionModel {
    pub fn new(p: f64, s: f64, seed: u64) -> Result<Self> {
        let user = Self { p, s, seed };
        user.validate()?;
        Ok(user)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidArgument(format!("usage p = {} outside [0, 1]", self.p)));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidArgument(format!("adherence s = {} must be >= 0", self.s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Log price the user settled on.
    pub z: f64,
    pub adhered: bool,
}

/// Draws one user decision. Always consumes one uniform and one normal
/// variate, whatever the outcome, so streams stay aligned across `p`.
pub fn sample_user_decision<R: Rng + ?Sized>(
    prediction: f64,
    true_log_y: f64,
    sigma_f2: f64,
    user: &UserDecisionModel,
    rng: &mut R,
) -> Decision {
    let u: f64 = rng.gen();
    let eps: f64 = rng.sample(StandardNormal);
    if u < user.p {
        Decision {
            z: prediction + (user.s * sigma_f2.max(0.0)).sqrt() * eps,
            adhered: true,
        }
    } else {
        Decision {
            z: true_log_y,
            adhered: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub window_fraction: f64,
    pub train_fraction: f64,
    /// Steps between retrains (M).
    pub steps_per_round: usize,
    pub model_family: ModelFamily,
    pub grid: HyperGrid,
    pub user: UserDecisionModel,
    pub master_seed: u64,
}

impl SimulationConfig {
    /// Defaults: 30% window, 75/25 split, the family's default grid.
    pub fn new(family: ModelFamily, p: f64, s: f64, steps_per_round: usize, master_seed: u64) -> Self {
        Self {
            window_fraction: 0.3,
            train_fraction: 0.75,
            steps_per_round,
            model_family: family,
            grid: HyperGrid::default_for(family),
            user: UserDecisionModel { p, s, seed: 0 },
            master_seed,
        }
    }

    pub fn validate(&self, n_rows: usize) -> Result<()> {
        self.user.validate()?;
        if self.steps_per_round == 0 {
            return Err(Error::InvalidArgument("steps_per_round must be >= 1".into()));
        }
        let capacity = window_capacity(n_rows, self.window_fraction);
        if capacity >= n_rows {
            return Err(Error::InvalidArgument(format!(
                "window of {capacity} rows leaves no unseen rows out of {n_rows}"
            )));
        }
        Ok(())
    }

    pub fn split_spec(&self, round: usize) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: SeedBuilder::new(self.master_seed).tag("split").int(round as u64).finish(),
        }
    }

    pub fn cv_seed(&self, round: usize) -> u64 {
        SeedBuilder::new(self.master_seed).tag("cv").int(round as u64).finish()
    }

    pub fn user_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(
            SeedBuilder::new(self.master_seed)
                .tag("user")
                .int(self.user.seed)
                .finish(),
        )
    }
}

/// Metrics of the model trained at the start of a round, on the held-out
/// part of the window it was trained from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub r2: f64,
    pub mae: f64,
    pub sigma_f2: f64,
    pub chosen_hyperparams: ParamSet,
    /// Steps taken before this round's model was trained.
    pub steps_consumed: usize,
    /// Set on a final round that followed fewer than M steps.
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Round whose model produced the prediction.
    pub round: usize,
    pub row_id: usize,
    pub prediction: f64,
    pub z: f64,
    pub adhered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    pub rounds: Vec<RoundRecord>,
    pub steps: Vec<StepRecord>,
    pub final_window: Dataset,
}

impl SimulationResult {
    pub fn r2_series(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.r2).collect()
    }

    pub fn final_r2(&self) -> f64 {
        self.rounds.last().map_or(f64::NAN, |r| r.r2)
    }
}

/// What a round's retrain produced; handed to observers.
pub struct RoundContext<'a> {
    pub round: usize,
    pub partial: bool,
    pub window: &'a Dataset,
    pub train: &'a Dataset,
    pub holdout: &'a Dataset,
    pub trained: &'a TrainedModel,
}

/// Hook called after every retrain, e.g. to feed runtime monitors.
pub trait RoundObserver {
    fn on_round(&mut self, ctx: &RoundContext<'_>) -> Result<()>;
}

impl RoundObserver for () {
    fn on_round(&mut self, _: &RoundContext<'_>) -> Result<()> {
        Ok(())
    }
}

impl<O: RoundObserver> RoundObserver for Option<O> {
    fn on_round(&mut self, ctx: &RoundContext<'_>) -> Result<()> {
        match self {
            Some(observer) => observer.on_round(ctx),
            None => Ok(()),
        }
    }
}

/// Split, tune and fit on one window.
pub struct RoundFit {
    pub train: Dataset,
    pub holdout: Dataset,
    pub trained: TrainedModel,
}

pub fn fit_round(window: &Dataset, config: &SimulationConfig, round: usize) -> Result<RoundFit> {
    fit_round_with(window, config, config.split_spec(round), config.cv_seed(round))
}

/// [`fit_round`] with an explicit split and CV seed.
pub fn fit_round_with(
    window: &Dataset,
    config: &SimulationConfig,
    spec: SplitSpec,
    cv_seed: u64,
) -> Result<RoundFit> {
    let (train, holdout) = split(window, spec)?;
    let cv = grid_search_cv(&train, &config.grid, config.model_family, cv_seed)?;
    let trained = train_and_evaluate(&train, &holdout, config.model_family, &cv.best)?;
    Ok(RoundFit {
        train,
        holdout,
        trained,
    })
}

pub fn run_simulation(ds: &Dataset, config: &SimulationConfig) -> Result<SimulationResult> {
    run_simulation_observed(ds, config, &mut ())
}

pub fn run_simulation_observed(
    ds: &Dataset,
    config: &SimulationConfig,
    observer: &mut dyn RoundObserver,
) -> Result<SimulationResult> {
    config.validate(ds.n_rows())?;
    let mut window = window_from(ds, config.window_fraction)?;
    let first_unseen = window.capacity();
    let total_steps = ds.n_rows() - first_unseen;
    let m = config.steps_per_round;
    let mut rng = config.user_rng();

    let mut rounds = Vec::new();
    let mut steps = Vec::with_capacity(total_steps);
    let mut round = 1;
    let mut current = retrain(&window.to_dataset()?, config, round, 0, false, observer, &mut rounds)?;

    let mut x = vec![0.0; ds.n_features()];
    for t in 0..total_steps {
        let k = first_unseen + t;
        x.iter_mut()
            .zip(ds.features.row(k).iter())
            .for_each(|(a, b)| *a = *b);
        let prediction = current.model.predict_row(&x);
        let decision = sample_user_decision(
            prediction,
            ds.targets[k],
            current.sigma_f2,
            &config.user,
            &mut rng,
        );
        if !decision.z.is_finite() {
            return Err(Error::NonFiniteWindow {
                step: t,
                row_id: ds.row_ids[k],
            });
        }
        window.push_replace(WindowRow {
            features: x.clone(),
            target: decision.z,
            row_id: ds.row_ids[k],
        })?;
        steps.push(StepRecord {
            step: t,
            round,
            row_id: ds.row_ids[k],
            prediction,
            z: decision.z,
            adhered: decision.adhered,
        });

        let done = t + 1;
        if done % m == 0 || done == total_steps {
            round += 1;
            let partial = done % m != 0;
            current = retrain(&window.to_dataset()?, config, round, done, partial, observer, &mut rounds)?;
        }
    }

    Ok(SimulationResult {
        config: config.clone(),
        rounds,
        steps,
        final_window: window.to_dataset()?,
    })
}

fn retrain(
    window: &Dataset,
    config: &SimulationConfig,
    round: usize,
    steps_consumed: usize,
    partial: bool,
    observer: &mut dyn RoundObserver,
    rounds: &mut Vec<RoundRecord>,
) -> Result<TrainedModel> {
    let fit = fit_round(window, config, round)?;
    observer.on_round(&RoundContext {
        round,
        partial,
        window,
        train: &fit.train,
        holdout: &fit.holdout,
        trained: &fit.trained,
    })?;
    rounds.push(RoundRecord {
        round,
        r2: fit.trained.holdout_r2,
        mae: fit.trained.holdout_mae,
        sigma_f2: fit.trained.sigma_f2,
        chosen_hyperparams: fit.trained.params.clone(),
        steps_consumed,
        partial,
    });
    Ok(fit.trained)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRanges {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub steps_per_round: Vec<usize>,
    pub families: Vec<ModelFamily>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepKey {
    pub p: f64,
    pub s: f64,
    pub steps_per_round: usize,
    pub family: ModelFamily,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub key: SweepKey,
    pub result: SimulationResult,
}

impl SweepRanges {
    /// Combinations in declaration order: `p` varies slowest, family fastest.
    pub fn combinations(&self, master_seed: u64) -> Result<Vec<SweepKey>> {
        if self.p.is_empty() || self.s.is_empty() || self.steps_per_round.is_empty() || self.families.is_empty() {
            return Err(Error::InvalidArgument("sweep ranges must be non-empty".into()));
        }
        let mut keys = Vec::new();
        for &p in &self.p {
            for &s in &self.s {
                for &m in &self.steps_per_round {
                    for &family in &self.families {
                        let seed = SeedBuilder::new(master_seed)
                            .tag("sweep")
                            .float(p)
                            .float(s)
                            .int(m as u64)
                            .tag(family.as_str())
                            .finish();
                        keys.push(SweepKey {
                            p,
                            s,
                            steps_per_round: m,
                            family,
                            seed,
                        });
                    }
                }
            }
        }
        Ok(keys)
    }
}

/// One independent run per combination. Each run's seed is derived from the
/// combination, so results do not depend on execution order.
pub fn sweep(
    ds: &Dataset,
    base: &SimulationConfig,
    ranges: &SweepRanges,
    parallel: bool,
) -> Result<Vec<SweepRun>> {
    let runs = sweep_observed(ds, base, ranges, parallel, |_| ())?;
    Ok(runs.into_iter().map(|(run, _)| run).collect())
}

/// [`sweep`] with a fresh observer per combination, returned next to its run.
pub fn sweep_observed<O, F>(
    ds: &Dataset,
    base: &SimulationConfig,
    ranges: &SweepRanges,
    parallel: bool,
    make_observer: F,
) -> Result<Vec<(SweepRun, O)>>
where
    O: RoundObserver + Send,
    F: Fn(&SweepKey) -> O + Sync,
{
    let keys = ranges.combinations(base.master_seed)?;
    let run_one = |key: &SweepKey| -> Result<(SweepRun, O)> {
        let mut config = base.clone();
        if key.family != base.model_family {
            config.grid = HyperGrid::default_for(key.family);
        }
        config.model_family = key.family;
        config.user.p = key.p;
        config.user.s = key.s;
        config.steps_per_round = key.steps_per_round;
        config.master_seed = key.seed;
        let mut observer = make_observer(key);
        run_simulation_observed(ds, &config, &mut observer)
            .map(|result| (SweepRun { key: *key, result }, observer))
            .map_err(|e| Error::SweepRun {
                p: key.p,
                s: key.s,
                steps_per_round: key.steps_per_round,
                family: key.family.to_string(),
                source: Box::new(e),
            })
    };
    if parallel {
        keys.par_iter().map(run_one).collect()
    } else {
        keys.iter().map(run_one).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_loop_keeps_true_price() {
        let user = UserDecisionModel::new(0.0, 0.5, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = sample_user_decision(1.0, 2.5, 0.3, &user, &mut rng);
            assert_eq!(d, Decision { z: 2.5, adhered: false });
        }
    }

    #[test]
    fn full_adherence_without_noise_returns_prediction() {
        let user = UserDecisionModel::new(1.0, 0.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let d = sample_user_decision(1.25, 9.0, 0.3, &user, &mut rng);
            assert_eq!(d, Decision { z: 1.25, adhered: true });
        }
    }

    #[test]
    fn adopted_prices_have_model_variance() {
        let user = UserDecisionModel::new(1.0, 1.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_user_decision(0.7, 0.0, 0.04, &user, &mut rng).z)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.7).abs() < 3.0 * 0.2 / (n as f64).sqrt());
        assert!((var - 0.04).abs() < 0.05 * 0.04);
    }

    #[test]
    fn rng_consumption_is_independent_of_outcome() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let never = UserDecisionModel::new(0.0, 1.0, 0).unwrap();
        let always = UserDecisionModel::new(1.0, 1.0, 0).unwrap();
        for _ in 0..10 {
            sample_user_decision(0.0, 0.0, 1.0, &never, &mut a);
            sample_user_decision(0.0, 0.0, 1.0, &always, &mut b);
        }
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn invalid_user_parameters() {
        assert!(UserDecisionModel::new(1.5, 0.3, 0).is_err());
        assert!(UserDecisionModel::new(0.5, -0.1, 0).is_err());
    }

    #[test]
    fn sweep_key_order_and_count() {
        let ranges = SweepRanges {
            p: vec![0.5, 0.7],
            s: vec![0.3, 0.9],
            steps_per_round: vec![20],
            families: vec![ModelFamily::Ridge],
        };
        let keys = ranges.combinations(1).unwrap();
        assert_eq!(keys.len(), 4);
        assert_eq!((keys[1].p, keys[1].s), (0.5, 0.9));
        let again = ranges.combinations(1).unwrap();
        assert_eq!(keys, again);
        let mut seeds: Vec<u64> = keys.iter().map(|k| k.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), 4);
    }
}
