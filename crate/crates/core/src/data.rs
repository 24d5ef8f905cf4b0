//! Datasets, CSV ingestion, synthetic data, splitting and the sliding window.
//!
//! Targets are stored as natural-log prices. The log transform happens once,
//! at ingestion (or generation); everything downstream works in log space.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of rows a sliding window must hold.
pub const MIN_WINDOW: usize = 4;

/// Feature matrix plus log-price targets, with the source index of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub targets: Vec<f64>,
    pub row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, targets: Vec<f64>, row_ids: Vec<usize>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::LengthMismatch(features.nrows(), targets.len()));
        }
        if row_ids.len() != targets.len() {
            return Err(Error::LengthMismatch(row_ids.len(), targets.len()));
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(Self {
            features,
            targets,
            row_ids,
        })
    }

    pub fn from_rows(rows: &[WindowRow]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty)?;
        let d = first.features.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.features.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.features.len(),
                });
            }
            data.extend_from_slice(&row.features);
        }
        Self::new(
            DMatrix::from_row_slice(rows.len(), d, &data),
            rows.iter().map(|r| r.target).collect(),
            rows.iter().map(|r| r.row_id).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn row_features(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn row(&self, i: usize) -> WindowRow {
        WindowRow {
            features: self.row_features(i),
            target: self.targets[i],
            row_id: self.row_ids[i],
        }
    }

    /// Rows at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Contiguous rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let idx: Vec<usize> = (start..end).collect();
        self.subset(&idx)
    }
}

/// Reads a header-first CSV file and log-transforms the target column.
///
/// Features are the remaining columns in header order. Row numbers in errors
/// are 0-based data rows (the header is not counted), matching `row_ids`.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };

    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingTargetColumn(target_column.to_owned()))?;
    let d = header.len() - 1;

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!(
                    "row {row}: expected {} fields, found {}",
                    header.len(),
                    record.len()
                ),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadCell {
                    row,
                    column: header[col].clone(),
                    value: cell.to_owned(),
                })?;
            if col == target_idx {
                if value <= 0.0 {
                    return Err(Error::NonPositivePrice { row, value });
                }
                targets.push(value.ln());
            } else {
                features.push(value);
            }
        }
    }
    let n = targets.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    Dataset::new(
        DMatrix::from_row_slice(n, d, &features),
        targets,
        (0..n).collect(),
    )
}

/// Writes `ds` as CSV with features `x0..x{d-1}` followed by the
/// exponentiated target under `target_column`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, target_column: &str) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let names: Vec<String> = (0..ds.n_features()).map(|j| format!("x{j}")).collect();
    out.push_str(&names.join(","));
    if !names.is_empty() {
        out.push(',');
    }
    out.push_str(target_column);
    out.push('\n');
    for i in 0..ds.n_rows() {
        for j in 0..ds.n_features() {
            let _ = write!(out, "{},", ds.features[(i, j)]);
        }
        let _ = writeln!(out, "{}", ds.targets[i].exp());
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Deterministic synthetic housing-like data.
///
/// Latent factors `u ~ N(0, 1)` are mapped to features by a per-column affine
/// map. The log price is a decaying-weight linear function of the factors
/// plus a small quadratic term per factor plus `N(0, noise_sd²)` noise.
pub fn synthesize(n: usize, d: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 4 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthesize needs n >= 4 and d >= 1 (got n={n}, d={d})"
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise_sd {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).expect("validated sd");
    let mut features = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut log_price = 3.0;
        for j in 0..d {
            let u: f64 = StandardNormal.sample(&mut rng);
            let jf = j as f64;
            features.push(2.0 * jf + (0.5 + 0.25 * jf) * u);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let weight = 0.2f64.powi(j as i32);
            log_price += sign * 1.5 * weight * u;
            log_price += 0.1 * weight * (u * u - 1.0) / std::f64::consts::SQRT_2;
        }
        log_price += noise.sample(&mut rng);
        targets.push(log_price);
    }
    Dataset::new(
        DMatrix::from_row_slice(n, d, &features),
        targets,
        (0..n).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Train size for `n` rows, rounding half up.
    pub fn train_size(&self, n: usize) -> usize {
        (self.train_fraction * n as f64 + 0.5).floor() as usize
    }
}

/// Seeded shuffle partition into (train, holdout). Each part keeps the
/// original relative row order.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction {} must lie in (0, 1)",
            spec.train_fraction
        )));
    }
    let n = ds.n_rows();
    if n < 4 {
        return Err(Error::TooFewRows { needed: 4, have: n });
    }
    let n_train = spec.train_size(n);
    if n_train == 0 || n_train >= n {
        return Err(Error::TooFewRows { needed: 2, have: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (train, holdout) = idx.split_at_mut(n_train);
    train.sort_unstable();
    holdout.sort_unstable();
    Ok((ds.subset(train), ds.subset(holdout)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub features: Vec<f64>,
    pub target: f64,
    pub row_id: usize,
}

/// Fixed-capacity FIFO of rows: once full, each push evicts the oldest row.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    capacity: usize,
    rows: VecDeque<WindowRow>,
}

impl SlidingWindow {
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &WindowRow> {
        self.rows.iter()
    }

    /// Evicts the front row and appends `row` at the back.
    pub fn push_replace(&mut self, row: WindowRow) -> Result<()> {
        if self.rows.len() != self.capacity {
            return Err(Error::WindowNotFull {
                len: self.rows.len(),
                capacity: self.capacity,
            });
        }
        self.rows.pop_front();
        self.rows.push_back(row);
        Ok(())
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        let rows: Vec<WindowRow> = self.rows.iter().cloned().collect();
        Dataset::from_rows(&rows)
    }
}

/// Number of rows a window built from `n` rows at `take_fraction` holds.
pub fn window_capacity(n: usize, take_fraction: f64) -> usize {
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    (take_fraction * n as f64 + 1e-9).floor() as usize
}

/// Window holding the first `floor(take_fraction * n)` rows of `ds`.
pub fn window_from(ds: &Dataset, take_fraction: f64) -> Result<SlidingWindow> {
    if !(take_fraction > 0.0 && take_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "take_fraction {take_fraction} must lie in (0, 1)"
        )));
    }
    let capacity = window_capacity(ds.n_rows(), take_fraction);
    if capacity < MIN_WINDOW {
        return Err(Error::WindowTooSmall { capacity });
    }
    Ok(SlidingWindow {
        capacity,
        rows: (0..capacity).map(|i| ds.row(i)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny(n: usize) -> Dataset {
        let features = DMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let targets = (0..n).map(|i| i as f64 * 0.1).collect();
        Dataset::new(features, targets, (0..n).collect()).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_logs_prices() {
        let e = std::f64::consts::E;
        let f = write_tmp(&format!("a,MEDV,b\n1,1.0,2\n3,{e},4\n5,{},6\n", e * e));
        let ds = load_csv(f.path(), "MEDV").unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.row_ids, vec![0, 1, 2]);
        assert_eq!(ds.row_features(1), vec![3.0, 4.0]);
        for (got, want) in ds.targets.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn load_csv_rejects_zero_price() {
        let mut body = String::from("x,MEDV\n");
        for i in 0..8 {
            let price = if i == 5 { 0.0 } else { 10.0 };
            body.push_str(&format!("{i},{price}\n"));
        }
        let f = write_tmp(&body);
        match load_csv(f.path(), "MEDV") {
            Err(Error::NonPositivePrice { row, .. }) => assert_eq!(row, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_csv_errors() {
        let f = write_tmp("x,MEDV\n1,2\n1,abc\n");
        match load_csv(f.path(), "MEDV") {
            Err(Error::BadCell { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "MEDV");
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("x,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), "MEDV"),
            Err(Error::MissingTargetColumn(_))
        ));
        assert!(matches!(
            load_csv("/nonexistent/boston.csv", "MEDV"),
            Err(Error::Io { .. })
        ));
        let f = write_tmp("x,MEDV\nNaN,2\n");
        assert!(matches!(load_csv(f.path(), "MEDV"), Err(Error::BadCell { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let ds = synthesize(30, 3, 0.1, 4).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path(), "MEDV").unwrap();
        let back = load_csv(f.path(), "MEDV").unwrap();
        assert_eq!(back.features, ds.features);
        for (a, b) in back.targets.iter().zip(&ds.targets) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn synthesize_is_deterministic() {
        let a = synthesize(100, 13, 0.1, 7).unwrap();
        let b = synthesize(100, 13, 0.1, 7).unwrap();
        assert_eq!(a, b);
        let c = synthesize(100, 13, 0.1, 8).unwrap();
        assert_ne!(a.targets, c.targets);
        assert!(synthesize(3, 1, 0.1, 0).is_err());
        assert!(synthesize(10, 0, 0.1, 0).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = tiny(100);
        let spec = SplitSpec {
            train_fraction: 0.75,
            seed: 3,
        };
        let (train, hold) = split(&ds, spec).unwrap();
        assert_eq!((train.n_rows(), hold.n_rows()), (75, 25));
        let (train2, hold2) = split(&ds, spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(hold, hold2);
        let mut all: Vec<usize> = train.row_ids.iter().chain(&hold.row_ids).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_rounds_half_up() {
        let spec = SplitSpec {
            train_fraction: 0.75,
            seed: 0,
        };
        // 0.75 * 506 = 379.5
        assert_eq!(spec.train_size(506), 380);
        let (train, hold) = split(&tiny(506), spec).unwrap();
        assert_eq!((train.n_rows(), hold.n_rows()), (380, 126));
    }

    #[test]
    fn split_rejects_degenerate() {
        assert!(split(&tiny(3), SplitSpec { train_fraction: 0.5, seed: 0 }).is_err());
        assert!(split(&tiny(10), SplitSpec { train_fraction: 0.99, seed: 0 }).is_err());
        assert!(split(&tiny(10), SplitSpec { train_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn window_capacity_rules() {
        assert_eq!(window_capacity(506, 0.3), 151);
        let w = window_from(&tiny(10), 0.5).unwrap();
        assert_eq!(w.capacity(), 5);
        let ids: Vec<usize> = w.rows().map(|r| r.row_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
        assert!(matches!(
            window_from(&tiny(20), 0.05),
            Err(Error::WindowTooSmall { capacity: 1 })
        ));
    }

    #[test]
    fn push_replace_evicts_oldest() {
        let ds = tiny(10);
        let mut w = SlidingWindow {
            capacity: 3,
            rows: (0..3).map(|i| ds.row(i)).collect(),
        };
        w.push_replace(ds.row(3)).unwrap();
        let ids: Vec<usize> = w.rows().map(|r| r.row_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn push_into_partial_window_fails() {
        let mut w = SlidingWindow {
            capacity: 4,
            rows: VecDeque::new(),
        };
        assert!(matches!(
            w.push_replace(tiny(1).row(0)),
            Err(Error::WindowNotFull { len: 0, capacity: 4 })
        ));
    }
}
