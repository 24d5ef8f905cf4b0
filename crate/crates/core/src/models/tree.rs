//! Regression trees grown greedily with the absolute-error criterion.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::ShrinkingAbsDev;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root. Rows with `x[feature] <= threshold` go left.
    pub nodes: Vec<Node>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_features: usize,
}

/// Training rows that ended in each leaf, keyed by node index.
pub(crate) type LeafAssignment = Vec<(usize, Vec<usize>)>;

pub fn fit_tree_mae(
    train: &Dataset,
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<RegressionTree> {
    let presorted = Presorted::new(&train.features);
    fit_with_assignment(
        &train.features,
        &presorted,
        &train.targets,
        max_depth,
        min_samples_leaf,
    )
    .map(|(tree, _)| tree)
}

/// Row indices ordered by each feature's value (ties by row index), stored
/// feature-major in one buffer. Boosting reuses one of these for every tree
/// since the features never change.
#[derive(Debug, Clone)]
pub(crate) struct Presorted {
    orders: Vec<usize>,
}

impl Presorted {
    pub fn new(features: &DMatrix<f64>) -> Self {
        let n = features.nrows();
        let data = features.as_slice();
        let mut orders = Vec::with_capacity(n * features.ncols());
        for col in data.chunks_exact(n.max(1)).take(features.ncols()) {
            let start = orders.len();
            orders.extend(0..n);
            orders[start..].sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        }
        Self { orders }
    }
}

pub(crate) fn fit_with_assignment(
    features: &DMatrix<f64>,
    presorted: &Presorted,
    targets: &[f64],
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<(RegressionTree, LeafAssignment)> {
    if max_depth == 0 || min_samples_leaf == 0 {
        return Err(Error::InvalidArgument(
            "max_depth and min_samples_leaf must be positive".into(),
        ));
    }
    let n = targets.len();
    if n < 2 * min_samples_leaf {
        return Err(Error::TooFewRows {
            needed: 2 * min_samples_leaf,
            have: n,
        });
    }
    let mut builder = Builder {
        columns: features.as_slice(),
        n_rows: n,
        n_features: features.ncols(),
        targets,
        max_depth,
        min_samples_leaf,
        nodes: Vec::new(),
        leaves: Vec::new(),
        orders: presorted.orders.clone(),
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        suffix: vec![0.0; n + 1],
        prefix: vec![0.0; n + 1],
        acc: ShrinkingAbsDev::default(),
        rank: vec![0; n],
        by_target: Vec::with_capacity(n),
        sorted_targets: Vec::with_capacity(n),
    };
    builder.grow(0, n, 0);
    let tree = RegressionTree {
        nodes: builder.nodes,
        max_depth,
        min_samples_leaf,
        n_features: features.ncols(),
    };
    Ok((tree, builder.leaves))
}

struct Builder<'a> {
    /// Column-major feature storage.
    columns: &'a [f64],
    n_rows: usize,
    n_features: usize,
    targets: &'a [f64],
    max_depth: usize,
    min_samples_leaf: usize,
    nodes: Vec<Node>,
    leaves: LeafAssignment,
    /// Feature-major sorted row orders; a node owns positions `lo..hi` of
    /// every feature's segment.
    orders: Vec<usize>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    suffix: Vec<f64>,
    prefix: Vec<f64>,
    acc: ShrinkingAbsDev,
    /// Rank of each row's target within the current node.
    rank: Vec<usize>,
    by_target: Vec<usize>,
    sorted_targets: Vec<f64>,
}

impl Builder<'_> {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature * self.n_rows + row]
    }

    fn segment(&self, feature: usize, lo: usize, hi: usize) -> &[usize] {
        &self.orders[feature * self.n_rows + lo..feature * self.n_rows + hi]
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        let m = hi - lo;
        self.by_target.clear();
        self.by_target.extend_from_slice(&self.orders[lo..hi]);
        let targets = self.targets;
        self.by_target
            .sort_by(|&a, &b| targets[a].total_cmp(&targets[b]).then(a.cmp(&b)));
        self.sorted_targets.clear();
        for (r, &i) in self.by_target.iter().enumerate() {
            self.rank[i] = r;
            self.sorted_targets.push(targets[i]);
        }
        self.nodes.push(Node::Leaf {
            value: median_of_sorted(&self.sorted_targets),
            n_samples: m,
        });

        if depth < self.max_depth && m >= 2 * self.min_samples_leaf {
            self.acc.load(&self.sorted_targets);
            let parent = self.acc.abs_dev();
            if let Some((feature, k, score)) = self.best_split(lo, hi) {
                if parent - score > 1e-12 * parent.max(1.0) {
                    let sorted = self.segment(feature, lo, hi);
                    let (a, b) = (sorted[k - 1], sorted[k]);
                    let (lo_v, hi_v) = (self.value(a, feature), self.value(b, feature));
                    let mut threshold = 0.5 * (lo_v + hi_v);
                    if threshold >= hi_v {
                        threshold = lo_v;
                    }
                    for pos in 0..m {
                        let r = self.orders[feature * self.n_rows + lo + pos];
                        self.goes_left[r] = pos < k;
                    }
                    for j in 0..self.n_features {
                        self.partition(j, lo, hi);
                    }
                    let left = self.grow(lo, lo + k, depth + 1);
                    let right = self.grow(lo + k, hi, depth + 1);
                    self.nodes[id] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    return id;
                }
            }
        }
        let mut rows = self.orders[lo..hi].to_vec();
        rows.sort_unstable();
        self.leaves.push((id, rows));
        id
    }

    /// Stable partition of one feature's segment by `goes_left`.
    fn partition(&mut self, feature: usize, lo: usize, hi: usize) {
        let base = feature * self.n_rows;
        let seg = &mut self.orders[base + lo..base + hi];
        self.scratch.clear();
        let mut w = 0;
        for i in 0..seg.len() {
            let r = seg[i];
            if self.goes_left[r] {
                seg[w] = r;
                w += 1;
            } else {
                self.scratch.push(r);
            }
        }
        seg[w..].copy_from_slice(&self.scratch);
    }

    /// Exhaustive scan over features and midpoints between consecutive
    /// distinct values; minimizes the summed absolute deviation of the two
    /// children about their medians. Ties keep the first candidate found.
    fn best_split(&mut self, lo: usize, hi: usize) -> Option<(usize, usize, f64)> {
        let min_leaf = self.min_samples_leaf;
        let n = hi - lo;
        let mut best: Option<(usize, usize, f64)> = None;
        // Scores this close count as ties, so the earliest candidate wins
        // regardless of summation order.
        self.acc.restore();
        let tol = 1e-12 * self.acc.abs_dev().max(1.0);

        for feature in 0..self.n_features {
            let base = feature * self.n_rows;
            let sorted = &self.orders[base + lo..base + hi];
            let col = &self.columns[base..base + self.n_rows];
            // Suffix sets by deleting from the left, prefix sets from the right.
            self.acc.restore();
            for k in 0..n {
                self.suffix[k] = self.acc.abs_dev();
                self.acc.remove(self.rank[sorted[k]]);
            }
            self.acc.restore();
            for k in (1..n).rev() {
                self.acc.remove(self.rank[sorted[k]]);
                self.prefix[k] = self.acc.abs_dev();
            }
            for k in min_leaf..=n - min_leaf {
                if col[sorted[k - 1]] >= col[sorted[k]] {
                    continue;
                }
                let score = self.prefix[k] + self.suffix[k];
                if best.is_none_or(|b| score < b.2 - tol) {
                    best = Some((feature, k, score));
                }
            }
        }
        best
    }
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

impl RegressionTree {
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_of returns a leaf"),
        }
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: features.ncols(),
            });
        }
        let mut row = vec![0.0; self.n_features];
        Ok((0..features.nrows())
            .map(|i| {
                row.iter_mut()
                    .enumerate()
                    .for_each(|(j, v)| *v = features[(i, j)]);
                self.predict_row(&row)
            })
            .collect())
    }

    pub(crate) fn set_leaf_value(&mut self, id: usize, new_value: f64) {
        if let Node::Leaf { value, .. } = &mut self.nodes[id] {
            *value = new_value;
        }
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, n_samples } => Some((*value, *n_samples)),
            Node::Split { .. } => None,
        })
    }
}
