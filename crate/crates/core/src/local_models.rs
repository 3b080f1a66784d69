//! Per-cluster predictors and the end-to-end predictive k-means pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    fit_kmeans, fit_kmeans_restarts, kpp_r_init, log_sum_exp, ClusterModel, LloydConfig, Points,
};
use crate::dataset::{Dataset, Schema, Value};
use crate::encoding::baseline::{DEFAULT_GROUPS, DEFAULT_RANK_LEVELS};
use crate::encoding::{BaselineEncoder, Cells, Codebook};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const DEFAULT_RESTARTS: usize = 25;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityVote {
    pub counts: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl MajorityVote {
    /// Laplace-smoothed class frequencies `(count_j + 1) / (m_k + J)`.
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let total: usize = counts.iter().sum();
        let denom = (total + counts.len()) as f64;
        let probabilities = counts.iter().map(|&c| (c + 1) as f64 / denom).collect();
        MajorityVote {
            counts,
            probabilities,
        }
    }

    pub fn size(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn label(&self) -> usize {
        argmax(&self.probabilities)
    }

    /// All members share one label.
    pub fn is_pure(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() == 1
    }
}

pub fn fit_mv(labels: &[usize], n_classes: usize) -> Result<MajorityVote> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("majority vote over an empty cluster"));
    }
    let mut counts = vec![0; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::InvalidParameter(format!("label {l} outside 0..{n_classes}")));
        }
        counts[l] += 1;
    }
    Ok(MajorityVote::from_counts(counts))
}

/// Naive Bayes restricted to selected features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnbModel {
    /// Exponent of each feature's likelihood; 0 drops the feature.
    pub weights: Vec<f64>,
    pub priors: Vec<f64>,
    /// `conditionals[f][cell][j] = P(cell | C_j)`; empty for unused features.
    pub conditionals: Vec<Vec<Vec<f64>>>,
    /// Selection cost of the kept features on the training cluster.
    pub selection_cost: f64,
    /// Selection cost with no feature.
    pub null_cost: f64,
}

impl SnbModel {
    pub fn selected(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&f| self.weights[f] > 0.0).collect()
    }

    fn log_scores(&self, cells: &[Option<usize>]) -> Vec<f64> {
        let mut scores: Vec<f64> = self.priors.iter().map(|p| p.ln()).collect();
        for (f, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            // Unseen values carry the same likelihood for every class.
            let Some(row) = cells.get(f).copied().flatten().and_then(|c| self.conditionals[f].get(c)) else {
                continue;
            };
            for (s, p) in scores.iter_mut().zip(row) {
                *s += w * p.ln();
            }
        }
        scores
    }
}

/// `P(j | X) ∝ P(j) Π_f P(cell_f | j)^{W_f}`, normalized in log space.
pub fn snb_predict(model: &SnbModel, cells: &[Option<usize>]) -> Vec<f64> {
    softmax(&model.log_scores(cells))
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(scores);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - z).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Cluster-local smoothed conditionals `(n_cell,j + 1) / (n_j + #cells)`.
fn local_conditionals(cells: &[Cells], labels: &[usize], f: usize, n_cells: usize, class_counts: &[usize]) -> Vec<Vec<f64>> {
    let j = class_counts.len();
    let mut counts = vec![vec![0usize; j]; n_cells];
    for (row, &l) in cells.iter().zip(labels) {
        if let Some(c) = row[f] {
            counts[c][l] += 1;
        }
    }
    let seen: Vec<usize> = (0..j).map(|k| counts.iter().map(|cc| cc[k]).sum()).collect();
    counts
        .iter()
        .map(|cc| {
            cc.iter()
                .zip(&seen)
                .map(|(&n, &t)| (n as f64 + 1.0) / (t as f64 + n_cells as f64))
                .collect()
        })
        .collect()
}

/// Penalized training log-loss of a selection given its summed log scores.
fn selection_cost(scores: &[Vec<f64>], labels: &[usize], n_selected: usize, n_features: usize) -> f64 {
    let loss: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, &l)| log_sum_exp(s) - s[l])
        .sum();
    loss + n_selected as f64 * ((n_features + 1) as f64).ln()
}

/// Greedy forward selection over features in decreasing order of `levels`
/// (ties by index). A feature is kept only if it strictly lowers the cost.
/// Returns `None` when fewer than two classes are present or nothing is
/// kept.
pub fn fit_snb_with(
    cells: &[Cells],
    labels: &[usize],
    n_cells: &[usize],
    levels: &[f64],
    n_classes: usize,
) -> Option<SnbModel> {
    let d = n_cells.len();
    let mut class_counts = vec![0usize; n_classes];
    for &l in labels {
        class_counts[l] += 1;
    }
    if class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let m = labels.len();
    let priors: Vec<f64> = class_counts
        .iter()
        .map(|&c| (c + 1) as f64 / (m + n_classes) as f64)
        .collect();
    let log_priors: Vec<f64> = priors.iter().map(|p| p.ln()).collect();
    let mut scores: Vec<Vec<f64>> = vec![log_priors; m];
    let null_cost = selection_cost(&scores, labels, 0, d);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| levels[b].total_cmp(&levels[a]).then(a.cmp(&b)));

    let mut weights = vec![0.0; d];
    let mut conditionals = vec![Vec::new(); d];
    let mut cost = null_cost;
    let mut n_selected = 0;
    for f in order {
        let cond = local_conditionals(cells, labels, f, n_cells[f], &class_counts);
        let trial: Vec<Vec<f64>> = scores
            .iter()
            .zip(cells)
            .map(|(s, row)| match row[f] {
                Some(c) => s.iter().zip(&cond[c]).map(|(a, p)| a + p.ln()).collect(),
                None => s.clone(),
            })
            .collect();
        let trial_cost = selection_cost(&trial, labels, n_selected + 1, d);
        if trial_cost < cost {
            cost = trial_cost;
            scores = trial;
            weights[f] = 1.0;
            conditionals[f] = cond;
            n_selected += 1;
        }
    }
    if n_selected == 0 {
        return None;
    }
    Some(SnbModel {
        weights,
        priors,
        conditionals,
        selection_cost: cost,
        null_cost,
    })
}

/// Local selective naive Bayes on the global codebook's cells.
pub fn fit_snb(cells: &[Cells], labels: &[usize], codebook: &Codebook) -> Option<SnbModel> {
    let n_cells: Vec<usize> = codebook.features.iter().map(|f| f.partition.n_cells()).collect();
    fit_snb_with(cells, labels, &n_cells, &codebook.levels(), codebook.n_classes())
}

/// `2 exp(-2 m_k ε²)`.
pub fn hoeffding_bound(m_k: usize, epsilon: f64) -> Result<f64> {
    if m_k == 0 {
        return Err(Error::InvalidParameter("m_k must be at least 1".into()));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be >= 0")));
    }
    Ok(2.0 * (-2.0 * m_k as f64 * epsilon * epsilon).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPredictor {
    pub pure: bool,
    pub majority: MajorityVote,
    /// Present only when it beat the majority vote on the selection cost.
    pub snb: Option<SnbModel>,
}

impl ClusterPredictor {
    pub fn predict(&self, cells: Option<&[Option<usize>]>) -> Vec<f64> {
        match (&self.snb, cells) {
            (Some(snb), Some(cells)) => snb_predict(snb, cells),
            _ => self.majority.probabilities.clone(),
        }
    }

    pub fn has_local_model(&self) -> bool {
        self.snb.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Supervised encoding, class-seeded init, majority vote.
    PkmMv,
    /// Supervised encoding, class-seeded init, local selective naive Bayes.
    PkmSnb,
    /// Unsupervised encoding, best of k-means++ restarts, majority vote.
    KmMv,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::KmMv, Variant::PkmMv, Variant::PkmSnb];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PkmMv => "PKM_MV",
            Variant::PkmSnb => "PKM_SNB",
            Variant::KmMv => "KM_MV",
        }
    }

    pub fn is_predictive(self) -> bool {
        !matches!(self, Variant::KmMv)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::PkmMv => "pkm-mv",
            Variant::PkmSnb => "pkm-snb",
            Variant::KmMv => "km-mv",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "pkm-mv" => Ok(Variant::PkmMv),
            "pkm-snb" => Ok(Variant::PkmSnb),
            "km-mv" => Ok(Variant::KmMv),
            _ => Err(Error::InvalidParameter(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkmConfig {
    pub variant: Variant,
    /// Number of clusters; `None` uses the number of classes.
    pub k: Option<usize>,
    pub seed: u64,
    pub lloyd: LloydConfig,
    pub restarts: usize,
    pub rank_levels: usize,
    pub groups: usize,
}

impl PkmConfig {
    pub fn new(variant: Variant) -> Self {
        PkmConfig {
            variant,
            k: None,
            seed: 0,
            lloyd: LloydConfig::default(),
            restarts: DEFAULT_RESTARTS,
            rank_levels: DEFAULT_RANK_LEVELS,
            groups: DEFAULT_GROUPS,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Encoder {
    Supervised(Codebook),
    Baseline(BaselineEncoder),
}

impl Encoder {
    fn cells(&self, instance: &[Value]) -> Result<Option<Cells>> {
        match self {
            Encoder::Supervised(cb) => cb.cells(instance).map(Some),
            Encoder::Baseline(_) => Ok(None),
        }
    }

    fn encode(&self, instance: &[Value], cells: Option<&Cells>) -> Result<Vec<f64>> {
        match (self, cells) {
            (Encoder::Supervised(cb), Some(cells)) => Ok(cb.encode_cells(cells)),
            (Encoder::Supervised(cb), None) => cb.encode(instance),
            (Encoder::Baseline(be), _) => be.encode(instance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub cluster: usize,
    pub probabilities: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkmModel {
    pub schema: Schema,
    pub config: PkmConfig,
    pub k: usize,
    pub n_classes: usize,
    pub encoder: Encoder,
    pub clustering: ClusterModel,
    pub predictors: Vec<ClusterPredictor>,
}

impl PkmModel {
    /// Fits the configured variant. `exec` governs the data-parallel inner
    /// loops; the result does not depend on it.
    pub fn fit(data: &Dataset, config: &PkmConfig, exec: Execution) -> Result<PkmModel> {
        let j = data.n_classes();
        let k = config.k.unwrap_or(j);
        if k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if config.variant.is_predictive() && k < j {
            return Err(Error::TooFewClusters { k, j });
        }
        let labels = data.labels();
        let (encoder, cells) = match config.variant {
            Variant::KmMv => (
                Encoder::Baseline(BaselineEncoder::fit(data, config.rank_levels, config.groups)?),
                None,
            ),
            _ => {
                let cb = Codebook::fit(data, exec)?;
                let cells = par::try_map_range(exec, data.len(), |i| cb.cells(&data.rows()[i]))?;
                (Encoder::Supervised(cb), Some(cells))
            }
        };
        let encoded = par::try_map_range(exec, data.len(), |i| {
            encoder.encode(&data.rows()[i], cells.as_ref().map(|c| &c[i]))
        })?;
        let dim = encoded.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidParameter("encoded instances have no components".into()));
        }
        let points = Points::new(dim, encoded.concat())?;
        let clustering = match config.variant {
            Variant::KmMv => fit_kmeans_restarts(&points, k, config.restarts, config.seed, &config.lloyd, exec)?,
            _ => {
                let init = kpp_r_init(&points, labels, j, k, config.seed)?;
                fit_kmeans(&points, init, &config.lloyd, exec)?
            }
        };
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &a) in clustering.assignments.iter().enumerate() {
            members[a].push(i);
        }
        let predictors = par::map_range(exec, k, |c| {
            let idx = &members[c];
            let cl: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let mut counts = vec![0; j];
            for &l in &cl {
                counts[l] += 1;
            }
            let majority = MajorityVote::from_counts(counts);
            let pure = majority.is_pure();
            let snb = match (&encoder, &cells) {
                (Encoder::Supervised(cb), Some(cells)) if config.variant == Variant::PkmSnb && !pure => {
                    let cc: Vec<Cells> = idx.iter().map(|&i| cells[i].clone()).collect();
                    fit_snb(&cc, &cl, cb)
                }
                _ => None,
            };
            ClusterPredictor { pure, majority, snb }
        });
        Ok(PkmModel {
            schema: data.schema().clone(),
            config: config.clone(),
            k,
            n_classes: j,
            encoder,
            clustering,
            predictors,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.clustering.centers.vectors
    }

    pub fn encode(&self, instance: &[Value]) -> Result<Vec<f64>> {
        self.check_arity(instance)?;
        self.encoder.encode(instance, None)
    }

    fn check_arity(&self, instance: &[Value]) -> Result<()> {
        if instance.len() != self.schema.n_features() {
            return Err(Error::SchemaMismatch(format!(
                "instance has {} values, model expects {}",
                instance.len(),
                self.schema.n_features()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, instance: &[Value]) -> Result<Prediction> {
        self.check_arity(instance)?;
        let cells = self.encoder.cells(instance)?;
        let x = self.encoder.encode(instance, cells.as_ref())?;
        let (cluster, _) = self.clustering.centers.nearest(&x);
        let probabilities = self.predictors[cluster].predict(cells.as_deref());
        let label = argmax(&probabilities);
        Ok(Prediction {
            cluster,
            probabilities,
            label,
        })
    }

    pub fn predict_batch(&self, rows: &[Vec<Value>], exec: Execution) -> Result<Vec<Prediction>> {
        par::try_map_range(exec, rows.len(), |i| self.predict(&rows[i]))
    }

    pub fn n_pure(&self) -> usize {
        self.predictors.iter().filter(|p| p.pure).count()
    }

    pub fn n_local(&self) -> usize {
        self.predictors.iter().filter(|p| p.has_local_model()).count()
    }
}

/// Fits a predictive variant with `K` clusters (class-seeded init).
pub fn fit_predictive_kmeans(data: &Dataset, k: usize, seed: u64, config: &PkmConfig) -> Result<PkmModel> {
    let mut cfg = config.clone();
    cfg.k = Some(k);
    cfg.seed = seed;
    PkmModel::fit(data, &cfg, Execution::Sequential)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mv_examples() {
        let mv = fit_mv(&[0, 0, 0, 0, 0, 0, 0, 0, 1, 1], 2).unwrap();
        assert_eq!(mv.probabilities, vec![0.75, 0.25]);
        let pure = fit_mv(&[0; 5], 2).unwrap();
        assert!((pure.probabilities[0] - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(pure.label(), 0);
        assert!(pure.is_pure());
        let one = fit_mv(&[0], 2).unwrap();
        assert!((one.probabilities[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(fit_mv(&[], 2).is_err());
    }

    #[test]
    fn mv_tie_goes_to_lowest_class() {
        assert_eq!(fit_mv(&[1, 0], 2).unwrap().label(), 0);
    }

    #[test]
    fn snb_direct_bayes() {
        let model = SnbModel {
            weights: vec![1.0],
            priors: vec![0.5, 0.5],
            conditionals: vec![vec![vec![0.8, 0.2], vec![0.2, 0.8]]],
            selection_cost: 0.0,
            null_cost: 1.0,
        };
        let p = snb_predict(&model, &[Some(0)]);
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.2).abs() < 1e-12);
        let zero = SnbModel {
            weights: vec![0.0],
            ..model
        };
        let p = snb_predict(&zero, &[Some(0)]);
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn snb_pure_cluster_is_none() {
        let cells = vec![vec![Some(0)]; 4];
        assert!(fit_snb_with(&cells, &[1, 1, 1, 1], &[2], &[0.5], 2).is_none());
    }

    #[test]
    fn hoeffding_values() {
        let b = hoeffding_bound(100, 0.1).unwrap();
        assert!((b - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((b - 0.27067).abs() < 1e-5);
        assert_eq!(hoeffding_bound(10, 0.0).unwrap(), 2.0);
        assert!(hoeffding_bound(0, 0.1).is_err());
        assert!(hoeffding_bound(1, -0.1).is_err());
        assert!(hoeffding_bound(20, 0.1).unwrap() < hoeffding_bound(10, 0.1).unwrap());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("pkm-snb".parse::<Variant>().unwrap(), Variant::PkmSnb);
        assert_eq!("KM_MV".parse::<Variant>().unwrap(), Variant::KmMv);
        assert!("svm".parse::<Variant>().is_err());
        assert_eq!(Variant::PkmMv.to_string(), "pkm-mv");
    }
}
