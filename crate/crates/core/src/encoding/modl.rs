//! MODL-style Bayes criteria for supervised univariate partitions, and the
//! greedy searches that minimize them.
//!
//! Numeric feature, `m` values, `I` intervals, `m_i` values in interval `i`,
//! `m_ij` of them in class `j`:
//!
//! ```text
//! cost = ln m + ln C(m+I-1, I-1)
//!      + Σ_i ln C(m_i+J-1, J-1) + Σ_i ln(m_i! / (m_i1! ... m_iJ!))
//! ```
//!
//! Categorical feature with `V` values grouped into `G` groups uses the same
//! per-cell terms with the partition prior `ln V + ln C(V+G-1, G-1) + ln G!`.

use statrs::function::factorial::{ln_binomial, ln_factorial};

/// Elementary intervals above this count are pre-binned to equal frequency.
pub const MAX_ELEMENTARY_INTERVALS: usize = 1000;

/// Categories above this count (by frequency) start in one shared group.
pub const MAX_INITIAL_GROUPS: usize = 500;

const IMPROVEMENT_EPS: f64 = 1e-10;

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_binomial(n as u64, k as u64)
}

/// Likelihood-plus-prior cost of one cell with the given class counts.
pub fn cell_cost(counts: &[usize]) -> f64 {
    let j = counts.len();
    let n: usize = counts.iter().sum();
    let mut c = ln_choose(n + j - 1, j - 1) + ln_factorial(n as u64);
    for &k in counts {
        c -= ln_factorial(k as u64);
    }
    c
}

/// Prior over the number of intervals and their bounds.
pub fn interval_prior(m: usize, intervals: usize) -> f64 {
    (m.max(1) as f64).ln() + ln_choose(m + intervals - 1, intervals - 1)
}

/// Prior over the number of groups and the value-to-group map.
pub fn grouping_prior(values: usize, groups: usize) -> f64 {
    (values.max(1) as f64).ln() + ln_choose(values + groups - 1, groups - 1)
        + ln_factorial(groups as u64)
}

/// Full cost of a contiguous partition given as per-interval class counts.
pub fn discretization_cost(intervals: &[Vec<usize>]) -> f64 {
    let m: usize = intervals.iter().flatten().sum();
    interval_prior(m, intervals.len()) + intervals.iter().map(|c| cell_cost(c)).sum::<f64>()
}

/// Full cost of a grouping of `values` categories given per-group counts.
pub fn grouping_cost(values: usize, groups: &[Vec<usize>]) -> f64 {
    grouping_prior(values, groups.len()) + groups.iter().map(|c| cell_cost(c)).sum::<f64>()
}

/// Compression gain of `best` over `null`, clipped to `[0, 1]`.
pub fn level(best: f64, null: f64) -> f64 {
    if null <= 0.0 {
        return 0.0;
    }
    (1.0 - best / null).clamp(0.0, 1.0)
}

/// Class-count prefix sums over a sequence of elementary cells, giving O(J)
/// counts for any contiguous run.
struct Prefix {
    j: usize,
    sums: Vec<usize>,
}

impl Prefix {
    fn new(cells: &[Vec<usize>], j: usize) -> Self {
        let mut sums = vec![0; (cells.len() + 1) * j];
        for (e, c) in cells.iter().enumerate() {
            for k in 0..j {
                sums[(e + 1) * j + k] = sums[e * j + k] + c[k];
            }
        }
        Prefix { j, sums }
    }

    fn counts(&self, s: usize, e: usize) -> Vec<usize> {
        (0..self.j)
            .map(|k| self.sums[e * self.j + k] - self.sums[s * self.j + k])
            .collect()
    }

    fn cost(&self, s: usize, e: usize) -> f64 {
        cell_cost(&self.counts(s, e))
    }
}

/// Result of a numeric search: interval end positions (exclusive, over the
/// elementary cells) and the criterion value.
#[derive(Debug, Clone)]
pub struct ContiguousSolution {
    pub ends: Vec<usize>,
    pub cost: f64,
}

/// Minimizes the discretization cost over contiguous groupings of the
/// elementary cells (class counts, in value order).
///
/// Bottom-up: merges the adjacent pair with the best cost change all the way
/// down to a single interval and keeps the best partition seen, then applies
/// split / merge-split / merge-merge-split / merge moves until none improves.
pub fn optimize_contiguous(cells: &[Vec<usize>], j: usize) -> ContiguousSolution {
    let e = cells.len();
    assert!(e > 0, "optimize_contiguous needs at least one cell");
    let m: usize = cells.iter().flatten().sum();
    let prefix = Prefix::new(cells, j);

    let mut ends: Vec<usize> = (1..=e).collect();
    let mut costs: Vec<f64> = cells.iter().map(|c| cell_cost(c)).collect();
    let mut total = interval_prior(m, ends.len()) + costs.iter().sum::<f64>();
    let mut best = (total, ends.clone());
    while ends.len() > 1 {
        let n = ends.len();
        let prior_delta = interval_prior(m, n - 1) - interval_prior(m, n);
        let mut pick = (f64::INFINITY, 0usize, 0.0);
        for i in 0..n - 1 {
            let s = if i == 0 { 0 } else { ends[i - 1] };
            let merged = prefix.cost(s, ends[i + 1]);
            let delta = merged - costs[i] - costs[i + 1] + prior_delta;
            if delta < pick.0 {
                pick = (delta, i, merged);
            }
        }
        let (delta, i, merged) = pick;
        ends.remove(i);
        costs.remove(i);
        costs[i] = merged;
        total += delta;
        if total <= best.0 + IMPROVEMENT_EPS {
            best = (total.min(best.0), ends.clone());
        }
    }

    let mut ends = best.1;
    post_optimize(&prefix, m, &mut ends);
    let cost = contiguous_cost(&prefix, m, &ends);
    ContiguousSolution { ends, cost }
}

fn contiguous_cost(prefix: &Prefix, m: usize, ends: &[usize]) -> f64 {
    let mut s = 0;
    let mut c = interval_prior(m, ends.len());
    for &e in ends {
        c += prefix.cost(s, e);
        s = e;
    }
    c
}

/// Best single cut strictly inside `(s, e)` and the cost of the two halves.
fn best_cut(prefix: &Prefix, s: usize, e: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for t in s + 1..e {
        let c = prefix.cost(s, t) + prefix.cost(t, e);
        if best.is_none_or(|(_, bc)| c < bc) {
            best = Some((t, c));
        }
    }
    best
}

fn post_optimize(prefix: &Prefix, m: usize, ends: &mut Vec<usize>) {
    enum Move {
        Split(usize, usize),
        MergeSplit(usize, usize),
        MergeMergeSplit(usize, usize),
        Merge(usize),
    }
    loop {
        let n = ends.len();
        let starts: Vec<usize> = std::iter::once(0).chain(ends[..n - 1].iter().copied()).collect();
        let costs: Vec<f64> = starts.iter().zip(ends.iter()).map(|(&s, &e)| prefix.cost(s, e)).collect();
        let prior_now = interval_prior(m, n);
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |delta: f64, mv: Move| {
            if delta < -IMPROVEMENT_EPS && best.as_ref().is_none_or(|(d, _)| delta < *d) {
                best = Some((delta, mv));
            }
        };

        let split_prior = interval_prior(m, n + 1) - prior_now;
        for i in 0..n {
            if let Some((t, c)) = best_cut(prefix, starts[i], ends[i]) {
                consider(c - costs[i] + split_prior, Move::Split(i, t));
            }
        }
        if n >= 2 {
            let merge_prior = interval_prior(m, n - 1) - prior_now;
            for i in 0..n - 1 {
                let (s, e) = (starts[i], ends[i + 1]);
                if let Some((t, c)) = best_cut(prefix, s, e) {
                    if t != ends[i] {
                        consider(c - costs[i] - costs[i + 1], Move::MergeSplit(i, t));
                    }
                }
                consider(
                    prefix.cost(s, e) - costs[i] - costs[i + 1] + merge_prior,
                    Move::Merge(i),
                );
            }
            for i in 0..n.saturating_sub(2) {
                let (s, e) = (starts[i], ends[i + 2]);
                if let Some((t, c)) = best_cut(prefix, s, e) {
                    consider(
                        c - costs[i] - costs[i + 1] - costs[i + 2] + merge_prior,
                        Move::MergeMergeSplit(i, t),
                    );
                }
            }
        }

        match best {
            None => break,
            Some((_, Move::Split(i, t))) => ends.insert(i, t),
            Some((_, Move::MergeSplit(i, t))) => ends[i] = t,
            Some((_, Move::MergeMergeSplit(i, t))) => {
                ends.remove(i + 1);
                ends[i] = t;
            }
            Some((_, Move::Merge(i))) => {
                ends.remove(i);
            }
        }
    }
}

/// Result of a grouping search: group id per input category and the cost.
#[derive(Debug, Clone)]
pub struct GroupingSolution {
    pub assignment: Vec<usize>,
    pub n_groups: usize,
    pub cost: f64,
}

/// Minimizes the grouping cost over partitions of the categories (class
/// counts per category).
///
/// Agglomerative: repeatedly merges the pair of groups with the best cost
/// change down to one group, keeps the best grouping seen, then moves single
/// categories between groups while that improves the cost.
pub fn optimize_grouping(categories: &[Vec<usize>], j: usize) -> GroupingSolution {
    let v = categories.len();
    assert!(v > 0, "optimize_grouping needs at least one category");

    // Initial groups: one per category, except that categories beyond the
    // MAX_INITIAL_GROUPS - 1 most frequent share a single group.
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(categories[c].iter().sum::<usize>()), c));
    let n_init = v.min(MAX_INITIAL_GROUPS);
    let mut assignment = vec![0usize; v];
    for (rank, &c) in order.iter().enumerate() {
        assignment[c] = rank.min(n_init - 1);
    }
    let mut groups: Vec<Vec<usize>> = vec![vec![0; j]; n_init];
    for (c, &g) in assignment.iter().enumerate() {
        for k in 0..j {
            groups[g][k] += categories[c][k];
        }
    }
    // members[g] = categories currently in slot g; slots are compacted on merge.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_init];
    for (c, &g) in assignment.iter().enumerate() {
        members[g].push(c);
    }
    let mut costs: Vec<f64> = groups.iter().map(|c| cell_cost(c)).collect();
    let mut total = grouping_prior(v, groups.len()) + costs.iter().sum::<f64>();
    let mut best = (total, snapshot(&members, v));

    let merged_counts = |a: &[usize], b: &[usize]| -> Vec<usize> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    };
    // Pairwise merge gains (excluding the prior change, which is uniform).
    let mut pair: Vec<Vec<f64>> = (0..groups.len())
        .map(|a| {
            (0..groups.len())
                .map(|b| {
                    if b <= a {
                        f64::INFINITY
                    } else {
                        cell_cost(&merged_counts(&groups[a], &groups[b])) - costs[a] - costs[b]
                    }
                })
                .collect()
        })
        .collect();

    while groups.len() > 1 {
        let n = groups.len();
        let prior_delta = grouping_prior(v, n - 1) - grouping_prior(v, n);
        let mut pick = (f64::INFINITY, 0, 0);
        for (a, row) in pair.iter().enumerate() {
            for (b, &d) in row.iter().enumerate().skip(a + 1) {
                if d < pick.0 {
                    pick = (d, a, b);
                }
            }
        }
        let (d, a, b) = pick;
        let merged = merged_counts(&groups[a], &groups[b]);
        total += d + prior_delta;
        groups[a] = merged;
        costs[a] = cell_cost(&groups[a]);
        groups.remove(b);
        costs.remove(b);
        let moved = members.remove(b);
        members[a].extend(moved);
        pair.remove(b);
        for row in pair.iter_mut() {
            row.remove(b);
        }
        for other in 0..groups.len() {
            if other == a {
                continue;
            }
            let (lo, hi) = if other < a { (other, a) } else { (a, other) };
            pair[lo][hi] =
                cell_cost(&merged_counts(&groups[lo], &groups[hi])) - costs[lo] - costs[hi];
        }
        if total <= best.0 + IMPROVEMENT_EPS {
            best = (total.min(best.0), snapshot(&members, v));
        }
    }

    let mut assignment = best.1;
    relocate_categories(categories, j, &mut assignment);
    let n_groups = assignment.iter().max().map_or(0, |&g| g + 1);
    let cost = grouping_cost(v, &group_counts(categories, j, &assignment, n_groups));
    GroupingSolution {
        assignment,
        n_groups,
        cost,
    }
}

/// Canonical group ids: groups numbered by their smallest category index.
fn snapshot(members: &[Vec<usize>], v: usize) -> Vec<usize> {
    let mut raw = vec![0usize; v];
    for (g, ms) in members.iter().enumerate() {
        for &c in ms {
            raw[c] = g;
        }
    }
    canonicalize(&raw)
}

fn canonicalize(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&g| {
            let next = map.len();
            *map.entry(g).or_insert(next)
        })
        .collect()
}

fn group_counts(categories: &[Vec<usize>], j: usize, assignment: &[usize], n: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![vec![0; j]; n];
    for (c, &g) in assignment.iter().enumerate() {
        for k in 0..j {
            groups[g][k] += categories[c][k];
        }
    }
    groups
}

/// Moves one category at a time to another (or a fresh) group while the
/// grouping cost strictly improves.
fn relocate_categories(categories: &[Vec<usize>], j: usize, assignment: &mut Vec<usize>) {
    let v = categories.len();
    // Each pass is O(V^2 * G * J); large vocabularies keep the merge result.
    if v > 64 {
        return;
    }
    loop {
        let n = assignment.iter().max().map_or(0, |&g| g + 1);
        let current = grouping_cost(v, &group_counts(categories, j, assignment, n));
        let mut best: Option<(f64, Vec<usize>)> = None;
        for c in 0..v {
            for target in 0..=n {
                if target == assignment[c] {
                    continue;
                }
                let mut cand = assignment.clone();
                cand[c] = target;
                let cand = canonicalize(&cand);
                let k = cand.iter().max().map_or(0, |&g| g + 1);
                let cost = grouping_cost(v, &group_counts(categories, j, &cand, k));
                let delta = cost - current;
                if delta < -IMPROVEMENT_EPS && best.as_ref().is_none_or(|(d, _)| delta < *d) {
                    best = Some((delta, cand));
                }
            }
        }
        match best {
            Some((_, cand)) => *assignment = cand,
            None => break,
        }
    }
}
