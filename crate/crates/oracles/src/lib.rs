//! Slow, obviously-correct reference implementations for cross-checking the
//! production models. Nothing here shares code with `loopsim-core`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row-major point set with one target per row.
#[derive(Debug, Clone)]
pub struct Points {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Points {
    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Row-major flattening, convenient for building matrices.
    pub fn flat(&self) -> Vec<f64> {
        self.x.iter().flatten().copied().collect()
    }
}

/// `n` rows of `d` standard-normal-ish features and a noisy linear target.
pub fn random_linear(n: usize, d: usize, seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d)
            .map(|j| rng.gen_range(-1.0..1.0) * (1.0 + j as f64) + j as f64)
            .collect();
        let t = 0.5 + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.5..0.5);
        x.push(row);
        y.push(t);
    }
    Points { x, y }
}

/// Small tree instance: 4..=15 points, 1 or 2 features, continuous values.
pub fn random_tree_instance(seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=15);
    let d = rng.gen_range(1..=2);
    let x = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();
    let y = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    Points { x, y }
}

// ---------------------------------------------------------------- ridge

/// Minimizes `|yc - Z θ|² + α|θ|²` by plain gradient descent, where `Z` is
/// the population-standardized feature matrix and `yc` the centered target.
/// Returns `(θ, intercept)`.
pub fn ridge_gradient_descent(points: &Points, alpha: f64) -> (Vec<f64>, f64) {
    let n = points.y.len();
    let d = points.n_features();
    let mut z = points.x.clone();
    for j in 0..d {
        let mean = points.x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = points.x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for row in z.iter_mut() {
            row[j] = (row[j] - mean) / sd;
        }
    }
    let ymean = points.y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = points.y.iter().map(|v| v - ymean).collect();

    // Gram matrix and right-hand side; the gradient is 2 (G θ - r + α θ).
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for (row, t) in z.iter().zip(&yc) {
        for a in 0..d {
            rhs[a] += row[a] * t;
            for b in 0..d {
                gram[a][b] += row[a] * row[b];
            }
        }
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|a| (0..d).map(|b| gram[a][b] * v[b]).sum::<f64>() + alpha * v[a])
            .collect()
    };
    // Power iteration for the largest eigenvalue of G + αI.
    let mut v = vec![1.0; d];
    let mut lambda = 1.0;
    for _ in 0..500 {
        let w = apply(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (2.0 * lambda * 1.01);

    let mut theta = vec![0.0; d];
    for _ in 0..2_000_000 {
        let h = apply(&theta);
        let grad: Vec<f64> = (0..d).map(|a| 2.0 * (h[a] - rhs[a])).collect();
        let gnorm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if gnorm < 1e-11 {
            break;
        }
        for a in 0..d {
            theta[a] -= step * grad[a];
        }
    }
    (theta, ymean)
}

// ---------------------------------------------------------------- trees

/// Sum of absolute deviations about the median.
pub fn sad(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let med = if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    };
    v.iter().map(|x| (x - med).abs()).sum()
}

/// Every (feature, threshold) split of `rows` at midpoints of consecutive
/// distinct values, in feature order then ascending threshold.
fn candidate_splits(points: &Points, rows: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for f in 0..points.n_features() {
        let mut vals: Vec<f64> = rows.iter().map(|&i| points.x[i][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| points.x[i][f] <= t);
            out.push((l, r));
        }
    }
    out
}

fn targets(points: &Points, rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| points.y[i]).collect()
}

/// Smallest total absolute deviation over all trees of depth ≤ `depth`
/// whose leaves hold at least `min_leaf` rows (exhaustive enumeration).
pub fn exhaustive_optimum(points: &Points, depth: usize, min_leaf: usize) -> f64 {
    fn go(points: &Points, rows: &[usize], depth: usize, min_leaf: usize) -> f64 {
        let mut best = sad(&targets(points, rows));
        if depth == 0 {
            return best;
        }
        for (l, r) in candidate_splits(points, rows) {
            if l.len() >= min_leaf && r.len() >= min_leaf {
                let cost = go(points, &l, depth - 1, min_leaf) + go(points, &r, depth - 1, min_leaf);
                best = best.min(cost);
            }
        }
        best
    }
    let rows: Vec<usize> = (0..points.y.len()).collect();
    go(points, &rows, depth, min_leaf)
}

/// Total absolute deviation of the tree grown by greedy top-down splitting:
/// each node takes the first split minimizing the children's summed absolute
/// deviation (scores within a relative 1e-12 tie), if it improves on the
/// node by more than a relative 1e-12.
pub fn greedy_objective(points: &Points, depth: usize, min_leaf: usize) -> f64 {
    fn go(points: &Points, rows: &[usize], depth: usize, min_leaf: usize) -> f64 {
        let here = sad(&targets(points, rows));
        if depth == 0 || rows.len() < 2 * min_leaf {
            return here;
        }
        let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
        for (l, r) in candidate_splits(points, rows) {
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let score = sad(&targets(points, &l)) + sad(&targets(points, &r));
            if best.as_ref().is_none_or(|b| score < b.0 - 1e-12 * here.max(1.0)) {
                best = Some((score, l, r));
            }
        }
        match best {
            Some((score, l, r)) if here - score > 1e-12 * here.max(1.0) => {
                go(points, &l, depth - 1, min_leaf) + go(points, &r, depth - 1, min_leaf)
            }
            _ => here,
        }
    }
    let rows: Vec<usize> = (0..points.y.len()).collect();
    go(points, &rows, depth, min_leaf)
}

// ---------------------------------------------------------------- boosting

pub fn huber(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        0.5 * r * r
    } else {
        delta * (r.abs() - 0.5 * delta)
    }
}

/// Linear-interpolation quantile (the "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
