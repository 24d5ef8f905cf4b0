//! Command-line driver: parses a run configuration, executes a single run,
//! a parameter sweep or the contraction check, and writes CSV, JSON and SVG
//! results.

pub mod config;
pub mod output;
pub mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use loopsim_core::data::{load_csv, synthesize, window_capacity, Dataset};
use loopsim_core::detectors::{
    build_checklist, estimate_contraction, Answer, BaselineMonitor, ChecklistReport,
    ContractionReport, HeldOutR2, LoopTransition, RuntimeFlags,
};
use loopsim_core::loop_sim::{run_simulation_observed, sweep_observed, SweepRanges};
use loopsim_core::models::ModelFamily;

use config::{keys_help, parse_config, DatasetSource, Overrides, RunConfig};
use output::{metrics_csv, run_id, steps_csv, summary_json, write_file, DatasetInfo, RunOutput};
use svg::{emit_svg, Panel, Series};

#[derive(Debug, Parser)]
#[command(name = "loopsim", version, about = "Simulate closed-loop model retraining and check for feedback loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One simulation with the configured p, s, M and model.
    #[command(after_help = keys_help())]
    Run(RunArgs),
    /// One simulation per combination of the sweep ranges.
    #[command(after_help = keys_help())]
    Sweep(SweepArgs),
    /// Contraction estimate and checklist only, no simulation.
    #[command(after_help = keys_help())]
    Detect(DetectArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Read the dataset from this CSV instead of synthesizing one.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Usage probability [default: 0.7].
    #[arg(long)]
    pub p: Option<f64>,
    /// Adherence variance multiplier [default: 0.3].
    #[arg(long)]
    pub s: Option<f64>,
    /// Steps between retrains [default: 20].
    #[arg(long)]
    pub m: Option<usize>,
    /// Model family, ridge or gbr [default: ridge].
    #[arg(long)]
    pub model: Option<ModelFamily>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Usage probabilities [default: 0.5,0.7].
    #[arg(long, value_delimiter = ',')]
    pub p_range: Option<Vec<f64>>,
    /// Adherence multipliers [default: 0.3,0.9].
    #[arg(long, value_delimiter = ',')]
    pub s_range: Option<Vec<f64>>,
    /// Steps between retrains [default: 20].
    #[arg(long, value_delimiter = ',')]
    pub m_range: Option<Vec<usize>>,
    /// Model families [default: ridge].
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelFamily>>,
    /// Run combinations one after another.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Usage probability of the system under test [default: 0.7].
    #[arg(long)]
    pub p: Option<f64>,
    /// Adherence multiplier of the system under test [default: 0.3].
    #[arg(long)]
    pub s: Option<f64>,
    /// Steps between retrains [default: 20].
    #[arg(long)]
    pub m: Option<usize>,
    /// Model family, ridge or gbr [default: ridge].
    #[arg(long)]
    pub model: Option<ModelFamily>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run(_) => "run",
            Command::Sweep(_) => "sweep",
            Command::Detect(_) => "detect",
        }
    }

    fn config_path(&self) -> Option<&Path> {
        let common = match self {
            Command::Run(a) => &a.common,
            Command::Sweep(a) => &a.common,
            Command::Detect(a) => &a.common,
        };
        common.config.as_deref()
    }

    pub fn overrides(&self) -> Overrides {
        let common = |c: &CommonArgs| Overrides {
            csv: c.csv.clone(),
            seed: c.seed,
            out: c.out.clone(),
            ..Default::default()
        };
        match self {
            Command::Run(a) => Overrides {
                p: a.p,
                s: a.s,
                steps_per_round: a.m,
                model: a.model,
                ..common(&a.common)
            },
            Command::Detect(a) => Overrides {
                p: a.p,
                s: a.s,
                steps_per_round: a.m,
                model: a.model,
                ..common(&a.common)
            },
            Command::Sweep(a) => Overrides {
                p_range: a.p_range.clone(),
                s_range: a.s_range.clone(),
                m_range: a.m_range.clone(),
                models: a.models.clone(),
                sequential: a.sequential,
                ..common(&a.common)
            },
        }
    }
}

/// Files written by one invocation, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

pub fn execute(cli: &Cli) -> Result<Written> {
    let config = parse_config(cli.command.config_path(), &cli.command.overrides())?;
    let ds = load_dataset(&config.dataset)?;
    let capacity = window_capacity(ds.n_rows(), config.window_fraction);
    let info = DatasetInfo {
        n_rows: ds.n_rows(),
        n_features: ds.n_features(),
        window_capacity: capacity,
        steps: ds.n_rows().saturating_sub(capacity),
    };
    prepare_out(&config.out)?;

    let mut files = BTreeMap::new();
    let command = cli.command.name();
    match &cli.command {
        Command::Run(_) => {
            let run = single_run(&ds, &config)?;
            emit_runs(command, &config, &info, &[run], &mut files)?;
        }
        Command::Sweep(_) => {
            let runs = sweep_runs(&ds, &config)?;
            emit_runs(command, &config, &info, &runs, &mut files)?;
        }
        Command::Detect(_) => {
            let report = contraction(&ds, &config, config.model, config.p, config.s, config.steps_per_round)?;
            let checklist = checklist(&config, config.p, config.s, Some(report.clone()), None);
            let summary = summary_json(command, &config, &info, &[], Some(&report), Some(&checklist))?;
            files.insert("summary.json".to_string(), summary);
        }
    }

    for (name, contents) in &files {
        write_file(&config.out.join(name), contents)?;
    }
    Ok(Written {
        dir: config.out.clone(),
        files: files.into_keys().collect(),
    })
}

fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    match source {
        DatasetSource::Csv { path, target } => load_csv(path, target)
            .with_context(|| format!("loading dataset {}", path.display())),
        DatasetSource::Synthetic { n, d, noise, seed } => {
            synthesize(*n, *d, *noise, *seed).context("synthesizing dataset")
        }
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let meta = std::fs::metadata(dir)?;
    anyhow::ensure!(
        !meta.permissions().readonly(),
        "output directory {} is not writable",
        dir.display()
    );
    Ok(())
}

fn new_monitor(config: &RunConfig) -> Result<Option<BaselineMonitor>> {
    if config.baseline_enabled {
        Ok(Some(BaselineMonitor::new(config.baseline)?))
    } else {
        Ok(None)
    }
}

fn contraction(
    ds: &Dataset,
    config: &RunConfig,
    family: ModelFamily,
    p: f64,
    s: f64,
    steps_per_round: usize,
) -> Result<ContractionReport> {
    let sim = config.simulation(family, p, s, steps_per_round);
    let transition = LoopTransition::closed_loop(ds, sim)?;
    let window = window_capacity(ds.n_rows(), config.window_fraction);
    let report = estimate_contraction(
        ds,
        &transition,
        &HeldOutR2::default(),
        &config.contraction_config(window),
    )
    .context("contraction estimate")?;
    Ok(report)
}

fn checklist(
    config: &RunConfig,
    p: f64,
    s: f64,
    contraction: Option<ContractionReport>,
    monitor: Option<&BaselineMonitor>,
) -> ChecklistReport {
    let flags = monitor.map(|m| RuntimeFlags {
        baseline_alarm: m.alarm(),
        drift_alarm: m.drift().alarm(),
    });
    build_checklist(
        Answer {
            value: config.q1,
            rationale: config.q1_rationale.clone(),
        },
        p,
        s,
        contraction,
        flags,
    )
}

/// Contraction (if enabled) and checklist for a finished run.
fn finish_run(
    ds: &Dataset,
    config: &RunConfig,
    result: loopsim_core::loop_sim::SimulationResult,
    monitor: Option<BaselineMonitor>,
) -> Result<RunOutput> {
    let c = &result.config;
    let (family, p, s, m) = (c.model_family, c.user.p, c.user.s, c.steps_per_round);
    let report = if config.contraction.enabled {
        Some(contraction(ds, config, family, p, s, m)?)
    } else {
        None
    };
    let detectors_on = report.is_some() || monitor.is_some();
    let checklist = detectors_on.then(|| checklist(config, p, s, report, monitor.as_ref()));
    Ok(RunOutput {
        run_id: run_id(family, p, s, m),
        result,
        monitor,
        checklist,
    })
}

fn single_run(ds: &Dataset, config: &RunConfig) -> Result<RunOutput> {
    let sim = config.simulation(config.model, config.p, config.s, config.steps_per_round);
    let mut monitor = new_monitor(config)?;
    let result = run_simulation_observed(ds, &sim, &mut monitor).context("simulation")?;
    finish_run(ds, config, result, monitor)
}

fn sweep_runs(ds: &Dataset, config: &RunConfig) -> Result<Vec<RunOutput>> {
    let mut runs = Vec::new();
    for &family in &config.sweep.models {
        // one core sweep per family so each uses its configured grid
        let base = config.simulation(family, config.p, config.s, config.steps_per_round);
        let ranges = SweepRanges {
            p: config.sweep.p.clone(),
            s: config.sweep.s.clone(),
            steps_per_round: config.sweep.steps_per_round.clone(),
            families: vec![family],
        };
        let monitor = new_monitor(config)?;
        let results = sweep_observed(ds, &base, &ranges, config.sweep.parallel, |_| monitor.clone())
            .context("sweep")?;
        for (run, observer) in results {
            runs.push(finish_run(ds, config, run.result, observer)?);
        }
    }
    Ok(runs)
}

fn emit_runs(
    command: &str,
    config: &RunConfig,
    info: &DatasetInfo,
    runs: &[RunOutput],
    files: &mut BTreeMap<String, String>,
) -> Result<()> {
    files.insert("metrics.csv".into(), metrics_csv(runs));
    files.insert("steps.csv".into(), steps_csv(runs));
    files.insert("summary.json".into(), summary_json(command, config, info, runs, None, None)?);
    for (name, svg) in plots(runs) {
        files.insert(name, svg);
    }
    Ok(())
}

/// Panel title for one (p, s) cell.
pub fn panel_title(p: f64, s: f64) -> String {
    format!("p = {p}, s = {s}")
}

/// One SVG per (model, metric). Panels are (p, s) cells, p descending down
/// the rows and s ascending across the columns; each run is one line.
pub fn plots(runs: &[RunOutput]) -> Vec<(String, String)> {
    let mut by_model: BTreeMap<ModelFamily, Vec<&RunOutput>> = BTreeMap::new();
    for run in runs {
        by_model.entry(run.model()).or_default().push(run);
    }
    let mut out = Vec::new();
    for (model, runs) in by_model {
        let mut ps: Vec<f64> = runs.iter().map(|r| r.p()).collect();
        let mut ss: Vec<f64> = runs.iter().map(|r| r.s()).collect();
        ps.sort_by(|a, b| b.total_cmp(a));
        ps.dedup();
        ss.sort_by(f64::total_cmp);
        ss.dedup();
        for (metric, y_label) in [("r2", "R² (unitless)"), ("mae", "MAE (log price)")] {
            let mut panels = Vec::new();
            for &p in &ps {
                for &s in &ss {
                    let series = runs
                        .iter()
                        .filter(|r| r.p() == p && r.s() == s)
                        .map(|r| Series {
                            label: format!("M = {}", r.steps_per_round()),
                            points: r
                                .result
                                .rounds
                                .iter()
                                .map(|rec| {
                                    let v = if metric == "r2" { rec.r2 } else { rec.mae };
                                    (rec.round as f64, v)
                                })
                                .collect(),
                        })
                        .collect();
                    panels.push(Panel {
                        title: panel_title(p, s),
                        series,
                    });
                }
            }
            let title = format!("Model: {model}, metric: {}", if metric == "r2" { "R²" } else { "MAE" });
            let svg = emit_svg(&title, "round r (retrains)", y_label, &panels, ss.len());
            out.push((format!("plot_{model}_{metric}.svg"), svg));
        }
    }
    out
}
