//! Independent reference implementations and data generators shared by the
//! integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use pkmeans::{Dataset, FeatureKind, Schema, SchemaDecl, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load_fixture(name: &str) -> Dataset {
    let dir = data_dir();
    let decl = SchemaDecl::from_file(dir.join(format!("{name}.schema"))).unwrap();
    Dataset::load_csv(dir.join(format!("{name}.csv")), &decl).unwrap()
}

pub fn ln_fact(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn ln_choose(n: usize, k: usize) -> f64 {
    ln_fact(n) - ln_fact(k) - ln_fact(n - k)
}

fn cell_terms(cells: &[Vec<usize>], j: usize) -> f64 {
    cells
        .iter()
        .map(|c| {
            let n: usize = c.iter().sum();
            ln_choose(n + j - 1, j - 1) + ln_fact(n) - c.iter().map(|&k| ln_fact(k)).sum::<f64>()
        })
        .sum()
}

/// Bayes cost of a contiguous partition given per-interval class counts.
pub fn interval_cost(intervals: &[Vec<usize>], j: usize) -> f64 {
    let m: usize = intervals.iter().flatten().sum();
    let i = intervals.len();
    (m as f64).ln() + ln_choose(m + i - 1, i - 1) + cell_terms(intervals, j)
}

/// Bayes cost of a grouping of `v` categories given per-group counts.
pub fn group_cost(v: usize, groups: &[Vec<usize>], j: usize) -> f64 {
    let g = groups.len();
    (v as f64).ln() + ln_choose(v + g - 1, g - 1) + ln_fact(g) + cell_terms(groups, j)
}

/// Minimum cost over all `2^(n-1)` contiguous partitions of the cells.
pub fn exhaustive_interval_optimum(cells: &[Vec<usize>], j: usize) -> (f64, usize) {
    let n = cells.len();
    let mut best = (f64::INFINITY, 0);
    for mask in 0u32..(1 << (n - 1)) {
        let mut parts: Vec<Vec<usize>> = vec![vec![0; j]];
        for (e, c) in cells.iter().enumerate() {
            if e > 0 && mask & (1 << (e - 1)) != 0 {
                parts.push(vec![0; j]);
            }
            let last = parts.last_mut().unwrap();
            for (a, b) in last.iter_mut().zip(c) {
                *a += b;
            }
        }
        let cost = interval_cost(&parts, j);
        if cost < best.0 {
            best = (cost, parts.len());
        }
    }
    best
}

/// Minimum cost over every set partition of the categories.
pub fn exhaustive_group_optimum(categories: &[Vec<usize>], j: usize) -> (f64, usize) {
    let v = categories.len();
    let mut best = (f64::INFINITY, 0);
    // Restricted growth strings enumerate each set partition once.
    let mut rgs = vec![0usize; v];
    loop {
        let g = rgs.iter().max().unwrap() + 1;
        let mut groups = vec![vec![0; j]; g];
        for (c, &k) in categories.iter().zip(&rgs) {
            for (a, b) in groups[k].iter_mut().zip(c) {
                *a += b;
            }
        }
        let cost = group_cost(v, &groups, j);
        if cost < best.0 {
            best = (cost, g);
        }
        let mut i = v - 1;
        loop {
            if i == 0 {
                return best;
            }
            let max_prefix = rgs[..i].iter().max().copied().unwrap();
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for r in &mut rgs[i + 1..] {
                    *r = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Sorted distinct values with per-value class counts.
pub fn elementary_cells(values: &[f64], labels: &[usize], j: usize) -> Vec<Vec<usize>> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut cells = vec![vec![0; j]; distinct.len()];
    for (v, &l) in values.iter().zip(labels) {
        let i = distinct.iter().position(|d| d == v).unwrap();
        cells[i][l] += 1;
    }
    cells
}

/// Random small discretization instance: `(values, labels, J)`.
pub fn random_interval_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>, usize) {
    let j = rng.random_range(2..=3);
    let m = rng.random_range(2..=30);
    let distinct = rng.random_range(2..=12);
    // A class-dependent drift keeps some instances informative.
    let drift = rng.random_range(0.0..1.0);
    let mut values = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let l = rng.random_range(0..j);
        let base = if rng.random_bool(drift) {
            (l * distinct / j + rng.random_range(0..=(distinct / j))).min(distinct - 1)
        } else {
            rng.random_range(0..distinct)
        };
        values.push(base as f64);
        labels.push(l);
    }
    (values, labels, j)
}

/// Random small grouping instance: `(tokens, labels, J)` over at most six
/// categories.
pub fn random_group_instance(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<usize>, usize) {
    let j = rng.random_range(2..=3);
    let m = rng.random_range(2..=30);
    let v = rng.random_range(1..=6);
    let affinity: Vec<usize> = (0..v).map(|_| rng.random_range(0..j)).collect();
    let strength = rng.random_range(0.0..1.0);
    let mut tokens = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let c = rng.random_range(0..v);
        let l = if rng.random_bool(strength) { affinity[c] } else { rng.random_range(0..j) };
        tokens.push(format!("c{c}"));
        labels.push(l);
    }
    (tokens, labels, j)
}

/// Per-category class counts in token order.
pub fn category_cells(tokens: &[String], labels: &[usize], j: usize) -> Vec<Vec<usize>> {
    let mut names: Vec<&String> = tokens.iter().collect();
    names.sort();
    names.dedup();
    let mut cells = vec![vec![0; j]; names.len()];
    for (t, &l) in tokens.iter().zip(labels) {
        let i = names.iter().position(|n| *n == t).unwrap();
        cells[i][l] += 1;
    }
    cells
}

/// Mann-Whitney AUC by counting every positive/negative pair.
pub fn auc_all_pairs(scores: &[f64], positive: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (k, &sk) in scores.iter().enumerate() {
            if positive[k] {
                continue;
            }
            pairs += 1.0;
            if si > sk {
                num += 1.0;
            } else if si == sk {
                num += 0.5;
            }
        }
    }
    num / pairs
}

pub fn numeric_dataset(rows: &[Vec<f64>], labels: &[usize], classes: &[&str]) -> Dataset {
    let d = rows[0].len();
    let decl = SchemaDecl {
        features: (0..d)
            .map(|n| pkmeans::dataset::Feature {
                name: format!("x{n}"),
                kind: FeatureKind::Numeric,
            })
            .collect(),
        target: "class".into(),
    };
    let schema = Schema::new(decl, classes.iter().map(|c| c.to_string()).collect()).unwrap();
    let cells = rows.iter().map(|r| r.iter().map(|&v| Value::Numeric(v)).collect()).collect();
    Dataset::new(schema, cells, labels.to_vec()).unwrap()
}

/// Isotropic Gaussian blobs; blob `b` has label `blob_labels[b]`.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    blob_labels: &[usize],
    per_blob: usize,
    sd: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..per_blob {
        for (c, &l) in centers.iter().zip(blob_labels) {
            rows.push(c.iter().map(|&x| x + noise.sample(&mut rng)).collect());
            labels.push(l);
        }
    }
    (rows, labels)
}

/// Two well-separated 2-d Gaussian classes with `m` rows in total.
pub fn two_blobs(m: usize, seed: u64) -> Dataset {
    let (rows, labels) = gaussian_blobs(&[vec![0.0, 0.0], vec![10.0, 10.0]], &[0, 1], m / 2, 1.0, seed);
    numeric_dataset(&rows, &labels, &["A", "B"])
}

/// Random encoded instance with `d * j` components, all `<= 0`.
pub fn random_encoded(rng: &mut ChaCha8Rng, d: usize, j: usize) -> Vec<f64> {
    (0..d * j).map(|_| -rng.random_range(0.0..6.0)).collect()
}
