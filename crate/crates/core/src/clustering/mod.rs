//! Center initialization, Lloyd iteration and the k-means objective.

mod distance;

pub use distance::{
    class_log_likelihoods, delta_p, dist_b_p, euclidean_phi, log_evidence, log_posteriors,
};
pub(crate) use distance::{log_sum_exp, squared_euclidean};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Dense row-major point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} values cannot be split into rows of width {dim}",
                data.len()
            )));
        }
        Ok(Points { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter("ragged rows".into()));
        }
        Points::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points { dim: self.dim, data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// One class-mean center per class, completed by k-means++.
    KppR,
    KmeansPP,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centers {
    pub vectors: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl Centers {
    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    /// Index and squared distance of the nearest center; ties go to the
    /// lowest index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.vectors, x)
    }
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = squared_euclidean(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Completes `centers` to `k` by D² sampling.
fn complete_plus_plus(points: &Points, centers: &mut Vec<Vec<f64>>, k: usize, rng: &mut ChaCha8Rng) {
    let m = points.len();
    let mut d2: Vec<f64> = if centers.is_empty() {
        vec![f64::INFINITY; m]
    } else {
        points.rows().map(|x| nearest(centers, x).1).collect()
    };
    while centers.len() < k {
        let total: f64 = d2.iter().filter(|v| v.is_finite()).sum();
        let pick = if centers.is_empty() || total.is_nan() || total <= 0.0 || !total.is_finite() {
            rng.random_range(0..m)
        } else {
            let target = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if w > 0.0 && cum > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave the target past the last positive weight.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        };
        let c = points.row(pick).to_vec();
        for (i, x) in points.rows().enumerate() {
            let d = squared_euclidean(x, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centers.push(c);
    }
}

/// Class-seeded initialization: the mean of each class, in class order,
/// then k-means++ for the remaining `k - J` centers. Deterministic when
/// `k == J`.
pub fn kpp_r_init(points: &Points, labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Centers> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no points to initialize from"));
    }
    if labels.len() != points.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: labels.len(),
        });
    }
    if k < n_classes {
        return Err(Error::TooFewClusters { k, j: n_classes });
    }
    let dim = points.dim();
    let mut sums = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (x, &l) in points.rows().zip(labels) {
        if l >= n_classes {
            return Err(Error::InvalidParameter(format!("label {l} outside 0..{n_classes}")));
        }
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(empty));
    }
    let mut centers: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    if k > n_classes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        complete_plus_plus(points, &mut centers, k, &mut rng);
    }
    Ok(Centers {
        vectors: centers,
        provenance: Provenance::KppR,
    })
}

/// Standard k-means++ initialization.
pub fn kmeans_pp_init(points: &Points, k: usize, seed: u64) -> Result<Centers> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds m = {} points",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(k);
    complete_plus_plus(points, &mut centers, k, &mut rng);
    Ok(Centers {
        vectors: centers,
        provenance: Provenance::KmeansPP,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    pub max_iter: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        LloydConfig {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centers: Centers,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub inertia: f64,
    /// Objective after the initial assignment and after every iteration.
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centers.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn assign_all(points: &Points, centers: &[Vec<f64>], exec: Execution) -> (Vec<usize>, Vec<f64>) {
    par::map_range(exec, points.len(), |i| nearest(centers, points.row(i)))
        .into_iter()
        .unzip()
}

/// Means of the clusters. An empty cluster is re-seeded at the point
/// farthest from its previous center, taken from a cluster with at least
/// two members (ties: lowest index); that point changes cluster.
fn update_centers(points: &Points, assignments: &mut [usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = previous.len();
    let dim = points.dim();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, x) in points.rows().enumerate() {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            let d = squared_euclidean(x, &previous[empty]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            sizes[assignments[i]] -= 1;
            assignments[i] = empty;
            sizes[empty] = 1;
        }
    }
    let mut sums = vec![vec![0.0; dim]; k];
    for (x, &a) in points.rows().zip(assignments.iter()) {
        for (s, v) in sums[a].iter_mut().zip(x) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(sizes)
        .zip(previous)
        .map(|((s, n), prev)| {
            if n == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect()
}

/// Lloyd iteration from `init`: assign to the nearest center, move centers
/// to cluster means, until assignments stop changing, the largest center
/// move is below `tol`, or `max_iter` updates were made.
pub fn fit_kmeans(points: &Points, init: Centers, config: &LloydConfig, exec: Execution) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no points to cluster"));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    if init.k() == 0 || init.vectors.iter().any(|c| c.len() != points.dim()) {
        return Err(Error::InvalidParameter(
            "initial centers do not match the point dimension".into(),
        ));
    }
    let provenance = init.provenance;
    let mut centers = init.vectors;
    let (mut assignments, d2) = assign_all(points, &centers, exec);
    let mut trace = vec![d2.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        let mut repaired = assignments.clone();
        let next = update_centers(points, &mut repaired, &centers);
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_euclidean(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        let (new_assignments, d2) = assign_all(points, &centers, exec);
        let changed = new_assignments != assignments;
        assignments = new_assignments;
        trace.push(d2.iter().sum());
        if !changed || shift < config.tol {
            break;
        }
    }
    let inertia = *trace.last().unwrap_or(&0.0);
    Ok(ClusterModel {
        centers: Centers {
            vectors: centers,
            provenance,
        },
        assignments,
        iterations,
        inertia,
        inertia_trace: trace,
    })
}

/// `Σ_k Σ_{x ∈ B_k} ‖x − μ_k‖²` for the model's centers and assignments.
pub fn inertia(points: &Points, model: &ClusterModel) -> Result<f64> {
    if model.assignments.len() != points.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: model.assignments.len(),
        });
    }
    let mut total = 0.0;
    for (x, &a) in points.rows().zip(&model.assignments) {
        let c = model
            .centers
            .vectors
            .get(a)
            .ok_or_else(|| Error::InvalidParameter(format!("assignment {a} out of range")))?;
        total += squared_euclidean(x, c);
    }
    Ok(total)
}

/// Best of `restarts` k-means++ initialized runs by final inertia (ties:
/// earliest). Restart seeds are drawn from `seed` up front.
pub fn fit_kmeans_restarts(
    points: &Points,
    k: usize,
    restarts: usize,
    seed: u64,
    config: &LloydConfig,
    exec: Execution,
) -> Result<ClusterModel> {
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..restarts).map(|_| master.random()).collect();
    let runs = par::try_map_range(exec, restarts, |r| {
        let init = kmeans_pp_init(points, k, seeds[r])?;
        fit_kmeans(points, init, config, Execution::Sequential)
    })?;
    let mut best: Option<ClusterModel> = None;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}
