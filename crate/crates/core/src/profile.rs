//! Cluster profiles: per-feature cell histograms of each cluster against
//! the whole population, plus the local feature weights.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::encoding::baseline::BaselineFeature;
use crate::error::{Error, Result};
use crate::local_models::{Encoder, PkmModel};
use crate::par::Execution;

const UNSEEN: &str = "<unseen>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub name: String,
    pub cells: Vec<String>,
    /// Cell frequencies over the whole data set; sums to 1.
    pub population: Vec<f64>,
    /// Cell frequencies inside the cluster; sums to 1 (all zero if empty).
    pub cluster: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    pub pure: bool,
    pub label_counts: Vec<usize>,
    pub label_distribution: Vec<f64>,
    /// Features kept by the local model with their weights.
    pub weights: Vec<(String, f64)>,
    pub features: Vec<FeatureProfile>,
}

type CellGrid = (Vec<Vec<String>>, Vec<Vec<Option<usize>>>);

fn cell_grid(model: &PkmModel, data: &Dataset) -> Result<CellGrid> {
    let rows = data.rows();
    match &model.encoder {
        Encoder::Supervised(cb) => {
            let labels = cb.features.iter().map(|f| f.partition.cell_labels()).collect();
            let cells = rows.iter().map(|r| cb.cells(r)).collect::<Result<_>>()?;
            Ok((labels, cells))
        }
        Encoder::Baseline(be) => {
            let labels = be
                .features
                .iter()
                .map(|f| match f {
                    BaselineFeature::Numeric(_) => (1..=10).map(|q| format!("rank decile {q}")).collect(),
                    BaselineFeature::Categorical(g) => {
                        let mut names = vec![Vec::new(); g.n_groups];
                        for (tok, &k) in &g.groups {
                            names[k].push(if tok.is_empty() { "<missing>" } else { tok.as_str() });
                        }
                        names.iter().map(|n| format!("{{{}}}", n.join(", "))).collect()
                    }
                })
                .collect();
            Ok((labels, rows.iter().map(|r| be.cells(r)).collect()))
        }
    }
}

fn normalize(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Profiles every cluster of `model` over `data` (normally its training
/// set). Instances are routed to clusters by prediction.
pub fn profile_clusters(model: &PkmModel, data: &Dataset) -> Result<Vec<ClusterProfile>> {
    if data.schema().features != model.schema.features {
        return Err(Error::SchemaMismatch("data features differ from the model's".into()));
    }
    let preds = model.predict_batch(data.rows(), Execution::Sequential)?;
    let (mut names, cells) = cell_grid(model, data)?;
    let d = names.len();
    let k = model.k;
    let j = model.n_classes;
    // An extra bin collects values without a cell, when any occur.
    for (f, n) in names.iter_mut().enumerate() {
        if cells.iter().any(|r| r[f].is_none()) {
            n.push(UNSEEN.into());
        }
    }
    let bin = |c: Option<usize>, width: usize| c.unwrap_or(width - 1);
    let mut pop = vec![Vec::new(); d];
    let mut per = vec![vec![Vec::new(); d]; k];
    for f in 0..d {
        pop[f] = vec![0usize; names[f].len()];
        for cl in per.iter_mut() {
            cl[f] = vec![0usize; names[f].len()];
        }
    }
    let mut label_counts = vec![vec![0usize; j]; k];
    for ((row, p), &l) in cells.iter().zip(&preds).zip(data.labels()) {
        label_counts[p.cluster][l] += 1;
        for f in 0..d {
            let b = bin(row[f], names[f].len());
            pop[f][b] += 1;
            per[p.cluster][f][b] += 1;
        }
    }
    let profiles = (0..k)
        .map(|c| {
            let pred = &model.predictors[c];
            let weights = pred
                .snb
                .as_ref()
                .map(|s| {
                    s.selected()
                        .into_iter()
                        .map(|f| (model.schema.features[f].name.clone(), s.weights[f]))
                        .collect()
                })
                .unwrap_or_default();
            let size = label_counts[c].iter().sum();
            ClusterProfile {
                cluster: c,
                size,
                pure: pred.pure,
                label_distribution: normalize(&label_counts[c]),
                label_counts: label_counts[c].clone(),
                weights,
                features: (0..d)
                    .map(|f| FeatureProfile {
                        name: model.schema.features[f].name.clone(),
                        cells: names[f].clone(),
                        population: normalize(&pop[f]),
                        cluster: normalize(&per[c][f]),
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(profiles)
}

fn bar(frac: f64, width: usize) -> String {
    let n = (frac * width as f64).round() as usize;
    "#".repeat(n.min(width))
}

/// Bar-style text rendering of profiles.
pub fn render_profiles(profiles: &[ClusterProfile], classes: &[String]) -> String {
    let mut s = String::new();
    for p in profiles {
        let _ = writeln!(s, "cluster {}  size {}{}", p.cluster, p.size, if p.pure { "  (pure)" } else { "" });
        let dist: Vec<String> = classes
            .iter()
            .zip(&p.label_distribution)
            .map(|(c, v)| format!("{c}: {:.1}%", 100.0 * v))
            .collect();
        let _ = writeln!(s, "  labels  {}", dist.join("  "));
        if p.weights.is_empty() {
            let _ = writeln!(s, "  local model: none (majority vote)");
        } else {
            let w: Vec<String> = p.weights.iter().map(|(n, w)| format!("{n}={w}")).collect();
            let _ = writeln!(s, "  local weights  {}", w.join("  "));
        }
        for f in &p.features {
            let _ = writeln!(s, "  {}", f.name);
            for ((cell, pop), cl) in f.cells.iter().zip(&f.population).zip(&f.cluster) {
                let _ = writeln!(
                    s,
                    "    {:<28} pop {:>6.1}% {:<20} cluster {:>6.1}% {}",
                    cell,
                    100.0 * pop,
                    bar(*pop, 20),
                    100.0 * cl,
                    bar(*cl, 20)
                );
            }
        }
        let _ = writeln!(s);
    }
    s
}
