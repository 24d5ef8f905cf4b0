//! Small order-statistic helpers shared by the models and detectors.



/// Median with the two middle values averaged for even lengths.
/// Returns `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Quantile by linear interpolation between order statistics
/// (position `q * (n - 1)`).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(v[lo] + frac * (v[hi] - v[lo]))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation of `values` against their index order.
pub fn spearman_vs_index(values: &[f64]) -> f64 {
    let index: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    pearson(&average_ranks(&index), &average_ranks(values))
}

/// Sum of absolute deviations about the median of a shrinking multiset.
/// Elements are addressed by their rank in the initial sorted order and
/// removed one at a time; each removal costs O(1).
#[derive(Debug, Default, Clone)]
pub(crate) struct ShrinkingAbsDev {
    values: Vec<f64>,
    /// (prev, next) over present elements, in rank order.
    links: Vec<(u32, u32)>,
    full_links: Vec<(u32, u32)>,
    full_total: f64,
    full_sum_le: f64,
    /// Lower median; elements at or below it number `(count + 1) / 2`.
    med: usize,
    sum_le: f64,
    count: usize,
    total: f64,
}

impl ShrinkingAbsDev {
    /// Index 0 and `m + 1` are sentinels; rank `r` lives at index `r + 1`.
    /// Stores the full set so `restore` can return to it cheaply.
    pub fn load(&mut self, sorted: &[f64]) {
        let m = sorted.len();
        self.values.clear();
        self.values.push(0.0);
        self.values.extend_from_slice(sorted);
        self.values.push(0.0);
        self.full_links.clear();
        self.full_links
            .extend((0..m + 2).map(|i| (i.saturating_sub(1) as u32, (i + 1).min(m + 1) as u32)));
        self.full_total = sorted.iter().sum();
        self.full_sum_le = sorted[..m.div_ceil(2)].iter().sum();
        self.restore();
    }

    pub fn restore(&mut self) {
        self.links.clear();
        self.links.extend_from_slice(&self.full_links);
        self.count = self.values.len() - 2;
        self.total = self.full_total;
        self.med = self.count.div_ceil(2);
        self.sum_le = self.full_sum_le;
    }

    pub fn remove(&mut self, rank: usize) {
        let i = rank + 1;
        let v = self.values[i];
        let before = self.count;
        self.count -= 1;
        self.total -= v;
        let (p, n) = self.links[i];
        self.links[p as usize].1 = n;
        self.links[n as usize].0 = p;
        if i <= self.med {
            self.sum_le -= v;
            if i == self.med {
                self.med = p as usize;
            }
            if before % 2 == 0 {
                self.med = self.links[self.med].1 as usize;
                self.sum_le += self.values[self.med];
            }
        } else if before % 2 == 1 {
            self.sum_le -= self.values[self.med];
            self.med = self.links[self.med].0 as usize;
        }
    }

    pub fn abs_dev(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let m = self.values[self.med];
        let cnt_le = self.count.div_ceil(2);
        let cnt_gt = (self.count - cnt_le) as f64;
        let total = m * cnt_le as f64 - self.sum_le + (self.total - self.sum_le) - m * cnt_gt;
        total.max(0.0)
    }
}
