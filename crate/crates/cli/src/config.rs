//! Run configuration: a flat `key = value` file plus command-line overrides.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Values may be wrapped in double quotes. Lists are comma
//! separated. Keys are dotted (`user.p = 0.7`) and each may appear once.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use loopsim_core::detectors::{BaselineConfig, ContractionConfig};
use loopsim_core::loop_sim::SimulationConfig;
use loopsim_core::models::{HyperGrid, ModelFamily};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },

    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: key `{key}` expects {expected}, got `{value}`")]
    TypeMismatch {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },

    #[error("line {line}: key `{key}` is set more than once")]
    Duplicate { line: usize, key: String },

    #[error("conflicting dataset sources: `dataset.csv` and `dataset.synthetic.*` are both set")]
    ConflictingSources,

    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv { path: PathBuf, target: String },
    Synthetic { n: usize, d: usize, noise: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub steps_per_round: Vec<usize>,
    pub models: Vec<ModelFamily>,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionSettings {
    pub enabled: bool,
    pub pairs: usize,
    pub epsilon_floor: f64,
    pub margin: f64,
    pub quantile: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub window_fraction: f64,
    pub train_fraction: f64,
    pub steps_per_round: usize,
    pub model: ModelFamily,
    pub seed: u64,
    pub p: f64,
    pub s: f64,
    pub user_seed: u64,
    pub grid_ridge: HyperGrid,
    pub grid_gbr: HyperGrid,
    pub sweep: SweepSettings,
    pub baseline_enabled: bool,
    pub baseline: BaselineConfig,
    pub contraction: ContractionSettings,
    pub q1: bool,
    pub q1_rationale: String,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let contraction = ContractionConfig::new(1);
        Self {
            dataset: DatasetSource::Synthetic {
                n: 506,
                d: 13,
                noise: 0.2,
                seed: 1,
            },
            window_fraction: 0.3,
            train_fraction: 0.75,
            steps_per_round: 20,
            model: ModelFamily::Ridge,
            seed: 0,
            p: 0.7,
            s: 0.3,
            user_seed: 0,
            grid_ridge: HyperGrid::default_for(ModelFamily::Ridge),
            grid_gbr: HyperGrid::default_for(ModelFamily::Gbr),
            sweep: SweepSettings {
                p: vec![0.5, 0.7],
                s: vec![0.3, 0.9],
                steps_per_round: vec![20],
                models: vec![ModelFamily::Ridge],
                parallel: true,
            },
            baseline_enabled: true,
            baseline: BaselineConfig::default(),
            contraction: ContractionSettings {
                enabled: false,
                pairs: contraction.n_pairs,
                epsilon_floor: contraction.epsilon_floor,
                margin: contraction.margin,
                quantile: contraction.quantile,
                seed: contraction.seed,
            },
            q1: true,
            q1_rationale: "the system is retrained on prices users chose after seeing its estimates"
                .into(),
            out: PathBuf::from("out"),
        }
    }
}

/// Every accepted key with its default, as listed in `--help`.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset.csv", "(unset; use the synthetic dataset)"),
    ("dataset.target", "MEDV"),
    ("dataset.synthetic.n", "506"),
    ("dataset.synthetic.d", "13"),
    ("dataset.synthetic.noise", "0.2"),
    ("dataset.synthetic.seed", "1"),
    ("sim.window_fraction", "0.3"),
    ("sim.train_fraction", "0.75"),
    ("sim.steps_per_round", "20"),
    ("sim.model", "ridge"),
    ("sim.seed", "0"),
    ("user.p", "0.7"),
    ("user.s", "0.3"),
    ("user.seed", "0"),
    ("grid.cv_folds", "5"),
    ("grid.ridge.alpha", "0.01,0.1,1,10,100"),
    ("grid.gbr.n_estimators", "50,100"),
    ("grid.gbr.max_depth", "2,3"),
    ("grid.gbr.learning_rate", "0.05,0.1"),
    ("grid.gbr.huber_delta_quantile", "0.9"),
    ("grid.gbr.min_samples_leaf", "5"),
    ("sweep.p", "0.5,0.7"),
    ("sweep.s", "0.3,0.9"),
    ("sweep.steps_per_round", "20"),
    ("sweep.models", "ridge"),
    ("sweep.parallel", "true"),
    ("detect.baseline.enabled", "true"),
    ("detect.baseline.alpha", "1"),
    ("detect.baseline.rho_threshold", "0.6"),
    ("detect.baseline.min_rounds", "8"),
    ("detect.baseline.train_fraction", "0.75"),
    ("detect.baseline.seed", "0"),
    ("detect.page_hinkley.delta", "0.05"),
    ("detect.page_hinkley.lambda", "50"),
    ("detect.contraction.enabled", "false"),
    ("detect.contraction.pairs", "50"),
    ("detect.contraction.epsilon_floor", "0.005"),
    ("detect.contraction.margin", "0.05"),
    ("detect.contraction.quantile", "0.95"),
    ("detect.contraction.seed", "0"),
    ("checklist.q1", "true"),
    (
        "checklist.q1_rationale",
        "the system is retrained on prices users chose after seeing its estimates",
    ),
    ("output.dir", "out"),
];

/// Text for `--help`: every key and its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Config file keys (defaults):\n");
    for (key, default) in KEYS {
        out.push_str(&format!("  {key:<width$}  {default}\n"));
    }
    out
}

/// Values given on the command line; each replaces the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub csv: Option<PathBuf>,
    pub p: Option<f64>,
    pub s: Option<f64>,
    pub steps_per_round: Option<usize>,
    pub model: Option<ModelFamily>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub p_range: Option<Vec<f64>>,
    pub s_range: Option<Vec<f64>>,
    pub m_range: Option<Vec<usize>>,
    pub models: Option<Vec<ModelFamily>>,
    pub sequential: bool,
}

/// Reads `path` (if any), applies `overrides` and validates the result.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            parse_str(&text)?
        }
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, overrides);
    validate(&config)?;
    Ok(config)
}

/// Parses config text on top of the defaults. Overrides are not applied.
pub fn parse_str(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut seen = BTreeSet::new();
    let mut csv_path = None;
    let mut target = None;
    let mut synthetic = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            text: trimmed.to_string(),
        })?;
        let key = key.trim();
        let value = unquote(value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: trimmed.to_string(),
            });
        }
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        let v = Value { key, value, line };
        match key {
            "dataset.csv" => csv_path = Some(PathBuf::from(value)),
            "dataset.target" => target = Some(value.to_string()),
            k if k.starts_with("dataset.synthetic.") => {
                synthetic = true;
                set_synthetic(&mut config.dataset, k, &v)?;
            }
            "sim.window_fraction" => config.window_fraction = v.real()?,
            "sim.train_fraction" => config.train_fraction = v.real()?,
            "sim.steps_per_round" => config.steps_per_round = v.count()?,
            "sim.model" => config.model = v.model()?,
            "sim.seed" => config.seed = v.seed()?,
            "user.p" => config.p = v.real()?,
            "user.s" => config.s = v.real()?,
            "user.seed" => config.user_seed = v.seed()?,
            "grid.cv_folds" => {
                let folds = v.count()?;
                config.grid_ridge.cv_folds = folds;
                config.grid_gbr.cv_folds = folds;
            }
            k if k.starts_with("grid.ridge.") => {
                set_grid(&mut config.grid_ridge, &k["grid.ridge.".len()..], &v)?
            }
            k if k.starts_with("grid.gbr.") => {
                set_grid(&mut config.grid_gbr, &k["grid.gbr.".len()..], &v)?
            }
            "sweep.p" => config.sweep.p = v.reals()?,
            "sweep.s" => config.sweep.s = v.reals()?,
            "sweep.steps_per_round" => config.sweep.steps_per_round = v.counts()?,
            "sweep.models" => config.sweep.models = v.models()?,
            "sweep.parallel" => config.sweep.parallel = v.flag()?,
            "detect.baseline.enabled" => config.baseline_enabled = v.flag()?,
            "detect.baseline.alpha" => config.baseline.alpha = v.real()?,
            "detect.baseline.rho_threshold" => config.baseline.rho_threshold = v.real()?,
            "detect.baseline.min_rounds" => config.baseline.min_rounds = v.count()?,
            "detect.baseline.train_fraction" => config.baseline.train_fraction = v.real()?,
            "detect.baseline.seed" => config.baseline.seed = v.seed()?,
            "detect.page_hinkley.delta" => config.baseline.ph_delta = v.real()?,
            "detect.page_hinkley.lambda" => config.baseline.ph_lambda = v.real()?,
            "detect.contraction.enabled" => config.contraction.enabled = v.flag()?,
            "detect.contraction.pairs" => config.contraction.pairs = v.count()?,
            "detect.contraction.epsilon_floor" => config.contraction.epsilon_floor = v.real()?,
            "detect.contraction.margin" => config.contraction.margin = v.real()?,
            "detect.contraction.quantile" => config.contraction.quantile = v.real()?,
            "detect.contraction.seed" => config.contraction.seed = v.seed()?,
            "checklist.q1" => config.q1 = v.flag()?,
            "checklist.q1_rationale" => config.q1_rationale = value.to_string(),
            "output.dir" => config.out = PathBuf::from(value),
            other => unreachable!("key `{other}` is listed but not handled"),
        }
    }

    if let Some(path) = csv_path {
        if synthetic {
            return Err(ConfigError::ConflictingSources);
        }
        config.dataset = DatasetSource::Csv {
            path,
            target: target.unwrap_or_else(|| "MEDV".into()),
        };
    } else if let Some(target) = target {
        return Err(ConfigError::Invalid {
            key: "dataset.target".into(),
            message: format!("`{target}` given without `dataset.csv`"),
        });
    }
    Ok(config)
}

fn apply_overrides(config: &mut RunConfig, o: &Overrides) {
    if let Some(path) = &o.csv {
        let target = match &config.dataset {
            DatasetSource::Csv { target, .. } => target.clone(),
            DatasetSource::Synthetic { .. } => "MEDV".into(),
        };
        config.dataset = DatasetSource::Csv {
            path: path.clone(),
            target,
        };
    }
    if let Some(p) = o.p {
        config.p = p;
    }
    if let Some(s) = o.s {
        config.s = s;
    }
    if let Some(m) = o.steps_per_round {
        config.steps_per_round = m;
    }
    if let Some(model) = o.model {
        config.model = model;
    }
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(out) = &o.out {
        config.out = out.clone();
    }
    if let Some(p) = &o.p_range {
        config.sweep.p = p.clone();
    }
    if let Some(s) = &o.s_range {
        config.sweep.s = s.clone();
    }
    if let Some(m) = &o.m_range {
        config.sweep.steps_per_round = m.clone();
    }
    if let Some(models) = &o.models {
        config.sweep.models = models.clone();
    }
    if o.sequential {
        config.sweep.parallel = false;
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

fn validate(c: &RunConfig) -> Result<()> {
    let unit = |key: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(invalid(key, format!("{v} is outside [0, 1]")))
        }
    };
    let open_unit = |key: &str, v: f64| {
        if v > 0.0 && v < 1.0 {
            Ok(())
        } else {
            Err(invalid(key, format!("{v} is outside (0, 1)")))
        }
    };
    unit("user.p", c.p)?;
    if c.s < 0.0 {
        return Err(invalid("user.s", format!("{} is negative", c.s)));
    }
    open_unit("sim.window_fraction", c.window_fraction)?;
    open_unit("sim.train_fraction", c.train_fraction)?;
    if c.steps_per_round == 0 {
        return Err(invalid("sim.steps_per_round", "must be at least 1"));
    }
    for p in &c.sweep.p {
        unit("sweep.p", *p)?;
    }
    if let Some(s) = c.sweep.s.iter().find(|s| **s < 0.0) {
        return Err(invalid("sweep.s", format!("{s} is negative")));
    }
    if c.sweep.steps_per_round.contains(&0) {
        return Err(invalid("sweep.steps_per_round", "must be at least 1"));
    }
    distinct("sweep.p", &c.sweep.p)?;
    distinct("sweep.s", &c.sweep.s)?;
    distinct("sweep.steps_per_round", &c.sweep.steps_per_round)?;
    distinct("sweep.models", &c.sweep.models)?;
    if let DatasetSource::Synthetic { n, d, noise, .. } = c.dataset {
        if n == 0 || d == 0 || noise < 0.0 {
            return Err(invalid(
                "dataset.synthetic",
                "needs n >= 1, d >= 1 and noise >= 0",
            ));
        }
    }
    Ok(())
}

fn distinct<T: PartialEq + std::fmt::Debug>(key: &str, values: &[T]) -> Result<()> {
    if values.is_empty() {
        return Err(invalid(key, "list is empty"));
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(invalid(key, format!("value {v:?} is repeated")));
        }
    }
    Ok(())
}

fn unquote(value: &str) -> &str {
    value
        .strip_prefix('"')
        .and_then(|v| v.strip_suffix('"'))
        .unwrap_or(value)
}

fn set_synthetic(source: &mut DatasetSource, key: &str, v: &Value<'_>) -> Result<()> {
    let DatasetSource::Synthetic { n, d, noise, seed } = source else {
        unreachable!("csv source is only chosen after parsing")
    };
    match key {
        "dataset.synthetic.n" => *n = v.count()?,
        "dataset.synthetic.d" => *d = v.count()?,
        "dataset.synthetic.noise" => *noise = v.real()?,
        "dataset.synthetic.seed" => *seed = v.seed()?,
        other => unreachable!("key `{other}` is listed but not handled"),
    }
    Ok(())
}

fn set_grid(grid: &mut HyperGrid, name: &str, v: &Value<'_>) -> Result<()> {
    let values = v.reals()?;
    let slot = grid
        .params
        .iter_mut()
        .find(|(n, _)| n == name)
        .expect("grid keys mirror the default grids");
    slot.1 = values;
    Ok(())
}

struct Value<'a> {
    key: &'a str,
    value: &'a str,
    line: usize,
}

impl Value<'_> {
    fn mismatch(&self, expected: &'static str) -> ConfigError {
        ConfigError::TypeMismatch {
            line: self.line,
            key: self.key.to_string(),
            expected,
            value: self.value.to_string(),
        }
    }

    fn real(&self) -> Result<f64> {
        parse_real(self.value).ok_or_else(|| self.mismatch("a finite number"))
    }

    fn count(&self) -> Result<usize> {
        self.value
            .parse()
            .map_err(|_| self.mismatch("a non-negative integer"))
    }

    fn seed(&self) -> Result<u64> {
        self.value
            .parse()
            .map_err(|_| self.mismatch("an unsigned 64-bit integer"))
    }

    fn flag(&self) -> Result<bool> {
        match self.value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.mismatch("true or false")),
        }
    }

    fn model(&self) -> Result<ModelFamily> {
        self.value
            .parse()
            .map_err(|_| self.mismatch("ridge or gbr"))
    }

    fn items(&self) -> impl Iterator<Item = &str> {
        self.value.split(',').map(str::trim)
    }

    fn reals(&self) -> Result<Vec<f64>> {
        self.items()
            .map(|s| parse_real(s).ok_or_else(|| self.mismatch("a comma-separated list of numbers")))
            .collect()
    }

    fn counts(&self) -> Result<Vec<usize>> {
        self.items()
            .map(|s| {
                s.parse()
                    .map_err(|_| self.mismatch("a comma-separated list of integers"))
            })
            .collect()
    }

    fn models(&self) -> Result<Vec<ModelFamily>> {
        self.items()
            .map(|s| {
                s.parse()
                    .map_err(|_| self.mismatch("a comma-separated list of ridge/gbr"))
            })
            .collect()
    }
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

impl RunConfig {
    pub fn grid(&self, family: ModelFamily) -> &HyperGrid {
        match family {
            ModelFamily::Ridge => &self.grid_ridge,
            ModelFamily::Gbr => &self.grid_gbr,
        }
    }

    pub fn simulation(&self, family: ModelFamily, p: f64, s: f64, steps_per_round: usize) -> SimulationConfig {
        let mut sim = SimulationConfig::new(family, p, s, steps_per_round, self.seed);
        sim.window_fraction = self.window_fraction;
        sim.train_fraction = self.train_fraction;
        sim.user.seed = self.user_seed;
        sim.grid = self.grid(family).clone();
        sim
    }

    pub fn contraction_config(&self, window_size: usize) -> ContractionConfig {
        ContractionConfig {
            n_pairs: self.contraction.pairs,
            window_size,
            epsilon_floor: self.contraction.epsilon_floor,
            margin: self.contraction.margin,
            quantile: self.contraction.quantile,
            seed: self.contraction.seed,
        }
    }
}
