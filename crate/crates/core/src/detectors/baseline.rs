//! Frozen-baseline monitor.
//!
//! A low-variance ridge model is fit once on the first round's training data
//! and never refit. Without a feedback loop its held-out performance should
//! not trend upward; a Spearman correlation of R² against round index above
//! the threshold raises the alarm. The baseline's per-round mean absolute
//! residual also feeds a Page-Hinkley detector.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::page_hinkley::PageHinkley;
use crate::data::{split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::loop_sim::{RoundContext, RoundObserver};
use crate::metrics;
use crate::models::{fit_ridge, predict, Model, RidgeModel};
use crate::seed::SeedBuilder;
use crate::stats::spearman_vs_index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub alpha: f64,
    pub rho_threshold: f64,
    pub min_rounds: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub ph_delta: f64,
    pub ph_lambda: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            rho_threshold: 0.6,
            min_rounds: 8,
            train_fraction: 0.75,
            seed: 0,
            ph_delta: 0.05,
            ph_lambda: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMonitor {
    pub config: BaselineConfig,
    baseline: Option<Model>,
    r2_series: Vec<f64>,
    mae_series: Vec<f64>,
    rho: f64,
    alarm: bool,
    alarm_round: Option<usize>,
    drift: PageHinkley,
}

impl BaselineMonitor {
    pub fn new(config: BaselineConfig) -> Result<Self> {
        Ok(Self {
            drift: PageHinkley::new(config.ph_delta, config.ph_lambda)?,
            config,
            baseline: None,
            r2_series: Vec::new(),
            mae_series: Vec::new(),
            rho: 0.0,
            alarm: false,
            alarm_round: None,
        })
    }

    /// Fits the frozen baseline. Only the first call has any effect.
    pub fn initialize(&mut self, train: &Dataset) -> Result<()> {
        if self.baseline.is_none() {
            self.baseline = Some(Model::Ridge(fit_ridge(train, self.config.alpha)?));
        }
        Ok(())
    }

    pub fn baseline(&self) -> Option<&RidgeModel> {
        match &self.baseline {
            Some(Model::Ridge(m)) => Some(m),
            _ => None,
        }
    }

    /// Scores the baseline on a seeded held-out slice of `round_window`.
    pub fn update(&mut self, round_window: &Dataset) -> Result<()> {
        let spec = SplitSpec {
            train_fraction: self.config.train_fraction,
            seed: SeedBuilder::new(self.config.seed)
                .tag("baseline")
                .int(self.r2_series.len() as u64)
                .finish(),
        };
        let (_, holdout) = split(round_window, spec)?;
        self.evaluate_on(&holdout)
    }

    /// Scores the baseline on `holdout` and updates trend and drift state.
    pub fn evaluate_on(&mut self, holdout: &Dataset) -> Result<()> {
        let model = self
            .baseline
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("baseline not initialized".into()))?;
        let preds = predict(model, &holdout.features)?;
        let r2 = metrics::r2(&holdout.targets, &preds)?;
        let mae = metrics::mae(&holdout.targets, &preds)?;
        self.mae_series.push(mae);
        self.drift.update(mae);
        self.push_score(r2);
        Ok(())
    }

    /// Appends one round's baseline R² and re-tests the trend.
    pub fn push_score(&mut self, r2: f64) {
        self.r2_series.push(r2);
        self.rho = spearman_vs_index(&self.r2_series);
        if !self.alarm
            && self.r2_series.len() >= self.config.min_rounds
            && self.rho > self.config.rho_threshold
        {
            self.alarm = true;
            self.alarm_round = Some(self.r2_series.len());
        }
    }

    pub fn r2_series(&self) -> &[f64] {
        &self.r2_series
    }

    pub fn mae_series(&self) -> &[f64] {
        &self.mae_series
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alarm(&self) -> bool {
        self.alarm
    }

    /// Round (1-based count of scores) at which the trend alarm fired.
    pub fn alarm_round(&self) -> Option<usize> {
        self.alarm_round
    }

    pub fn drift(&self) -> &PageHinkley {
        &self.drift
    }

    /// SHA-256 over the bit patterns of every baseline parameter.
    pub fn fingerprint(&self) -> Option<String> {
        let m = self.baseline()?;
        let mut h = Sha256::new();
        for v in m
            .theta
            .iter()
            .chain(&m.standardizer.means)
            .chain(&m.standardizer.sds)
            .chain([&m.intercept, &m.alpha])
        {
            h.update(v.to_bits().to_le_bytes());
        }
        Some(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

impl RoundObserver for BaselineMonitor {
    fn on_round(&mut self, ctx: &RoundContext<'_>) -> Result<()> {
        self.initialize(ctx.train)?;
        self.update(ctx.window)
    }
}
