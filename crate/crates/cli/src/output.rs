//! CSV and JSON emission. All text is UTF-8 with LF line endings; floats
//! use the shortest representation that parses back to the same value.

use std::fmt::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use loopsim_core::detectors::{BaselineMonitor, ChecklistReport, ContractionReport};
use loopsim_core::loop_sim::SimulationResult;
use loopsim_core::models::{ModelFamily, ParamSet};
use serde::Serialize;

use crate::config::RunConfig;

pub const METRICS_HEADER: &str = "run_id,round,partial,model,p,s,M,seed,r2,mae,sigma2";
pub const STEPS_HEADER: &str = "run_id,step,round,row_id,prediction,z,adhered";

/// One finished simulation plus whatever the detectors made of it.
#[derive(Debug)]
pub struct RunOutput {
    pub run_id: String,
    pub result: SimulationResult,
    pub monitor: Option<BaselineMonitor>,
    pub checklist: Option<ChecklistReport>,
}

impl RunOutput {
    pub fn model(&self) -> ModelFamily {
        self.result.config.model_family
    }

    pub fn p(&self) -> f64 {
        self.result.config.user.p
    }

    pub fn s(&self) -> f64 {
        self.result.config.user.s
    }

    pub fn steps_per_round(&self) -> usize {
        self.result.config.steps_per_round
    }
}

pub fn run_id(model: ModelFamily, p: f64, s: f64, steps_per_round: usize) -> String {
    format!("{model}_p{p}_s{s}_M{steps_per_round}")
}

pub fn metrics_csv(runs: &[RunOutput]) -> String {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for run in runs {
        let c = &run.result.config;
        for r in &run.result.rounds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                run.run_id,
                r.round,
                r.partial,
                c.model_family,
                c.user.p,
                c.user.s,
                c.steps_per_round,
                c.master_seed,
                r.r2,
                r.mae,
                r.sigma_f2
            );
        }
    }
    out
}

pub fn steps_csv(runs: &[RunOutput]) -> String {
    let mut out = String::new();
    out.push_str(STEPS_HEADER);
    out.push('\n');
    for run in runs {
        for s in &run.result.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                run.run_id, s.step, s.round, s.row_id, s.prediction, s.z, s.adhered
            );
        }
    }
    out
}

/// One parsed `metrics.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub round: usize,
    pub partial: bool,
    pub model: ModelFamily,
    pub p: f64,
    pub s: f64,
    pub steps_per_round: usize,
    pub seed: u64,
    pub r2: f64,
    pub mae: f64,
    pub sigma2: f64,
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(METRICS_HEADER) => {}
        other => bail!("unexpected metrics header {other:?}"),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                bail!("metrics row {}: expected 11 fields, found {}", i + 1, f.len());
            }
            let ctx = || format!("metrics row {}", i + 1);
            Ok(MetricsRow {
                run_id: f[0].to_string(),
                round: f[1].parse().with_context(ctx)?,
                partial: f[2].parse().with_context(ctx)?,
                model: f[3].parse().with_context(ctx)?,
                p: f[4].parse().with_context(ctx)?,
                s: f[5].parse().with_context(ctx)?,
                steps_per_round: f[6].parse().with_context(ctx)?,
                seed: f[7].parse().with_context(ctx)?,
                r2: f[8].parse().with_context(ctx)?,
                mae: f[9].parse().with_context(ctx)?,
                sigma2: f[10].parse().with_context(ctx)?,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct DatasetInfo {
    pub n_rows: usize,
    pub n_features: usize,
    pub window_capacity: usize,
    pub steps: usize,
}

#[derive(Debug, Serialize)]
struct RoundParams<'a> {
    round: usize,
    steps_consumed: usize,
    partial: bool,
    hyperparams: &'a ParamSet,
}

#[derive(Debug, Serialize)]
struct BaselineSummary<'a> {
    r2: &'a [f64],
    mae: &'a [f64],
    rho: f64,
    alarm: bool,
    alarm_round: Option<usize>,
    drift_alarm: bool,
    drift_alarm_round: Option<usize>,
    drift_statistic: f64,
    fingerprint: Option<String>,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    run_id: &'a str,
    model: ModelFamily,
    p: f64,
    s: f64,
    steps_per_round: usize,
    seed: u64,
    rounds: usize,
    final_r2: f64,
    final_mae: f64,
    round_params: Vec<RoundParams<'a>>,
    baseline: Option<BaselineSummary<'a>>,
    checklist: Option<&'a ChecklistReport>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    command: &'a str,
    config: &'a RunConfig,
    dataset: &'a DatasetInfo,
    runs: Vec<RunSummary<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    contraction: Option<&'a ContractionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checklist: Option<&'a ChecklistReport>,
}

/// `summary.json` for a run or sweep (`runs` non-empty) or for `detect`
/// (`runs` empty, `contraction` and `checklist` set).
pub fn summary_json(
    command: &str,
    config: &RunConfig,
    dataset: &DatasetInfo,
    runs: &[RunOutput],
    contraction: Option<&ContractionReport>,
    checklist: Option<&ChecklistReport>,
) -> Result<String> {
    let runs = runs
        .iter()
        .map(|run| {
            let c = &run.result.config;
            let last = run.result.rounds.last();
            RunSummary {
                run_id: &run.run_id,
                model: c.model_family,
                p: c.user.p,
                s: c.user.s,
                steps_per_round: c.steps_per_round,
                seed: c.master_seed,
                rounds: run.result.rounds.len(),
                final_r2: last.map_or(f64::NAN, |r| r.r2),
                final_mae: last.map_or(f64::NAN, |r| r.mae),
                round_params: run
                    .result
                    .rounds
                    .iter()
                    .map(|r| RoundParams {
                        round: r.round,
                        steps_consumed: r.steps_consumed,
                        partial: r.partial,
                        hyperparams: &r.chosen_hyperparams,
                    })
                    .collect(),
                baseline: run.monitor.as_ref().map(|m| BaselineSummary {
                    r2: m.r2_series(),
                    mae: m.mae_series(),
                    rho: m.rho(),
                    alarm: m.alarm(),
                    alarm_round: m.alarm_round(),
                    drift_alarm: m.drift().alarm(),
                    drift_alarm_round: m.drift().alarm_at(),
                    drift_statistic: m.drift().statistic(),
                    fingerprint: m.fingerprint(),
                }),
                checklist: run.checklist.as_ref(),
            }
        })
        .collect();
    let summary = Summary {
        command,
        config,
        dataset,
        runs,
        contraction,
        checklist,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    Ok(text)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}
