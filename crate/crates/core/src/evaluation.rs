//! Metrics, repeated stratified cross-validation and report assembly.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_kfold, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::local_models::{PkmConfig, PkmModel};
use crate::par::{self, Execution};

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("accuracy of no predictions"));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mann-Whitney AUC of `scores` for the positive instances, ties counting
/// one half.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(1));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, with tied runs sharing their mean rank.
    let mut twice_rank_sum = 0u128;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_mean = (start + 1 + end) as u128;
        let pos_in_run = order[start..end].iter().filter(|&&i| positive[i]).count() as u128;
        twice_rank_sum += twice_mean * pos_in_run;
        start = end;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// `Σ_i P(C_i) AUC(C_i vs rest)` with `P(C_i|X)` as the score. Classes
/// absent from `labels` are skipped and the weights renormalized over the
/// present ones.
pub fn auc_multiclass_weighted(probabilities: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probabilities.len(),
            right: labels.len(),
        });
    }
    let j = probabilities.first().map_or(0, Vec::len);
    if j == 0 || probabilities.iter().any(|p| p.len() != j) {
        return Err(Error::InvalidParameter("probability vectors must share a positive length".into()));
    }
    let mut counts = vec![0usize; j];
    for &l in labels {
        if l >= j {
            return Err(Error::InvalidParameter(format!("label {l} outside 0..{j}")));
        }
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::SingleClass(present));
    }
    let m = labels.len() as f64;
    let mut total = 0.0;
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let scores: Vec<f64> = probabilities.iter().map(|p| p[c]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        total += n as f64 / m * auc_binary(&scores, &positive)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for a single run).
    pub std: f64,
}

impl MetricResult {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MetricResult {
            name: name.into(),
            values,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub n_clusters: usize,
    pub pct_pure: f64,
    pub pct_local_model: f64,
    pub pct_no_local_model: f64,
}

impl ClusterStats {
    pub fn from_counts(pure: usize, local: usize, total: usize) -> Self {
        if total == 0 {
            return ClusterStats::default();
        }
        let pct = |n: usize| 100.0 * n as f64 / total as f64;
        ClusterStats {
            n_clusters: total,
            pct_pure: pct(pure),
            pct_local_model: pct(local),
            pct_no_local_model: pct(total - pure - local),
        }
    }
}

/// Shares of pure clusters, impure clusters with a local model and impure
/// clusters without one, over every cluster of every model.
pub fn cluster_stats<'a>(models: impl IntoIterator<Item = &'a PkmModel>) -> ClusterStats {
    let (mut pure, mut local, mut total) = (0, 0, 0);
    for m in models {
        pure += m.n_pure();
        local += m.n_local();
        total += m.k;
    }
    ClusterStats::from_counts(pure, local, total)
}

/// One named configuration to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub config: PkmConfig,
}

impl AlgorithmSpec {
    pub fn new(config: PkmConfig) -> Self {
        AlgorithmSpec {
            name: config.variant.name().to_string(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub fold: usize,
    pub model_seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub train_auc: f64,
    pub test_auc: f64,
    pub train_seconds: f64,
    pub n_clusters: usize,
    pub n_pure: usize,
    pub n_local_model: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub name: String,
    pub config: PkmConfig,
    pub train_acc: MetricResult,
    pub test_acc: MetricResult,
    pub train_auc: MetricResult,
    pub test_auc: MetricResult,
    /// Mean test over mean train.
    pub robustness_acc: f64,
    pub robustness_auc: f64,
    pub cluster_stats: ClusterStats,
    pub mean_train_seconds: f64,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub m: usize,
    pub d: usize,
    pub n_classes: usize,
    pub repeats: usize,
    pub folds: usize,
    pub seed: u64,
    pub algorithms: Vec<AlgorithmReport>,
}

/// Seed for the model trained on fold `f` of repeat `r`.
pub fn derive_seed(base: u64, repeat: usize, fold: usize, folds: usize) -> u64 {
    let idx = (repeat * folds + fold) as u64;
    base ^ idx.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// The fold plans used for every algorithm: repeat `r` uses seed `seed + r`.
pub fn fold_plans(data: &Dataset, repeats: usize, folds: usize, seed: u64) -> Result<Vec<FoldPlan>> {
    (0..repeats)
        .map(|r| stratified_kfold(data.labels(), folds, seed.wrapping_add(r as u64)))
        .collect()
}

fn metrics_on(model: &PkmModel, data: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    let rows: Vec<_> = indices.iter().map(|&i| data.rows()[i].clone()).collect();
    let truth: Vec<usize> = indices.iter().map(|&i| data.labels()[i]).collect();
    let preds = model.predict_batch(&rows, Execution::Sequential)?;
    let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let probs: Vec<Vec<f64>> = preds.into_iter().map(|p| p.probabilities).collect();
    Ok((accuracy(&labels, &truth)?, auc_multiclass_weighted(&probs, &truth)?))
}

fn run_fold(data: &Dataset, spec: &AlgorithmSpec, plan: &FoldPlan, repeat: usize, fold: usize) -> Result<RunRecord> {
    let (train, test) = plan.split(fold);
    if test.iter().any(|i| train.binary_search(i).is_ok()) {
        return Err(Error::InvalidParameter(format!(
            "fold {fold} of repeat {repeat} leaks test rows into training"
        )));
    }
    let train_data = data.subset(&train);
    let model_seed = derive_seed(spec.config.seed, repeat, fold, plan.k());
    let mut config = spec.config.clone();
    config.seed = model_seed;
    let start = Instant::now();
    let model = PkmModel::fit(&train_data, &config, Execution::Sequential)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let (train_acc, train_auc) = metrics_on(&model, data, &train)?;
    let (test_acc, test_auc) = metrics_on(&model, data, &test)?;
    Ok(RunRecord {
        repeat,
        fold,
        model_seed,
        train_acc,
        test_acc,
        train_auc,
        test_auc,
        train_seconds,
        n_clusters: model.k,
        n_pure: model.n_pure(),
        n_local_model: model.n_local(),
    })
}

fn summarize(spec: &AlgorithmSpec, runs: Vec<RunRecord>) -> AlgorithmReport {
    let col = |f: fn(&RunRecord) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let train_acc = MetricResult::new("train_acc", col(|r| r.train_acc));
    let test_acc = MetricResult::new("test_acc", col(|r| r.test_acc));
    let train_auc = MetricResult::new("train_auc", col(|r| r.train_auc));
    let test_auc = MetricResult::new("test_auc", col(|r| r.test_auc));
    let ratio = |t: &MetricResult, tr: &MetricResult| if tr.mean > 0.0 { t.mean / tr.mean } else { 0.0 };
    let cluster_stats = ClusterStats::from_counts(
        runs.iter().map(|r| r.n_pure).sum(),
        runs.iter().map(|r| r.n_local_model).sum(),
        runs.iter().map(|r| r.n_clusters).sum(),
    );
    let mean_train_seconds = MetricResult::new("train_seconds", col(|r| r.train_seconds)).mean;
    AlgorithmReport {
        name: spec.name.clone(),
        config: spec.config.clone(),
        robustness_acc: ratio(&test_acc, &train_acc),
        robustness_auc: ratio(&test_auc, &train_auc),
        train_acc,
        test_acc,
        train_auc,
        test_auc,
        cluster_stats,
        mean_train_seconds,
        runs,
    }
}

/// Repeated stratified cross-validation of several algorithms over the
/// same fold plans. Folds run under `exec`; each fold fits sequentially.
pub fn compare(
    data: &Dataset,
    dataset_name: &str,
    specs: &[AlgorithmSpec],
    repeats: usize,
    folds: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvaluationReport> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    if specs.is_empty() {
        return Err(Error::InvalidParameter("no algorithm to evaluate".into()));
    }
    let plans = fold_plans(data, repeats, folds, seed)?;
    let per_alg = repeats * folds;
    let runs = par::try_map_range(exec, specs.len() * per_alg, |t| {
        let (a, rf) = (t / per_alg, t % per_alg);
        let (r, f) = (rf / folds, rf % folds);
        run_fold(data, &specs[a], &plans[r], r, f)
    })?;
    let mut runs = runs.into_iter();
    let algorithms = specs
        .iter()
        .map(|s| summarize(s, runs.by_ref().take(per_alg).collect()))
        .collect();
    Ok(EvaluationReport {
        dataset: dataset_name.to_string(),
        m: data.len(),
        d: data.n_features(),
        n_classes: data.n_classes(),
        repeats,
        folds,
        seed,
        algorithms,
    })
}

pub fn cross_validate(
    data: &Dataset,
    spec: &AlgorithmSpec,
    repeats: usize,
    folds: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvaluationReport> {
    compare(data, "dataset", std::slice::from_ref(spec), repeats, folds, seed, exec)
}

impl EvaluationReport {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    /// Copy with wall-clock timings zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> EvaluationReport {
        let mut out = self.clone();
        for a in &mut out.algorithms {
            a.mean_train_seconds = 0.0;
            for r in &mut a.runs {
                r.train_seconds = 0.0;
            }
        }
        out
    }

    /// Aligned text tables: accuracy/AUC, then robustness, timing and
    /// cluster statistics. Percent values are printed from the report's
    /// fractions.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "dataset {}  m={} d={} J={}  {}x{} stratified CV, seed {}",
            self.dataset, self.m, self.d, self.n_classes, self.repeats, self.folds, self.seed
        );
        let _ = writeln!(
            s,
            "{:<10} {:>16} {:>16} {:>16} {:>16}",
            "algorithm", "train ACC", "test ACC", "train AUC", "test AUC"
        );
        let pm = |m: &MetricResult| format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std);
        for a in &self.algorithms {
            let _ = writeln!(
                s,
                "{:<10} {:>16} {:>16} {:>16} {:>16}",
                a.name,
                pm(&a.train_acc),
                pm(&a.test_acc),
                pm(&a.train_auc),
                pm(&a.test_auc)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>8} {:>10} {:>8} {:>8} {:>8}",
            "algorithm", "rob ACC", "rob AUC", "time (s)", "% pure", "% local", "% none"
        );
        for a in &self.algorithms {
            let _ = writeln!(
                s,
                "{:<10} {:>8.2} {:>8.2} {:>10.4} {:>8.2} {:>8.2} {:>8.2}",
                a.name,
                a.robustness_acc,
                a.robustness_auc,
                a.mean_train_seconds,
                a.cluster_stats.pct_pure,
                a.cluster_stats.pct_local_model,
                a.cluster_stats.pct_no_local_model
            );
        }
        s
    }

    /// One row per (algorithm, run) with every per-run metric.
    pub fn write_runs_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "algorithm", "repeat", "fold", "train_acc", "test_acc", "train_auc", "test_auc", "train_seconds",
            "n_clusters", "n_pure", "n_local_model",
        ])?;
        for a in &self.algorithms {
            for r in &a.runs {
                w.write_record([
                    a.name.clone(),
                    r.repeat.to_string(),
                    r.fold.to_string(),
                    format!("{:e}", r.train_acc),
                    format!("{:e}", r.test_acc),
                    format!("{:e}", r.train_auc),
                    format!("{:e}", r.test_auc),
                    format!("{:e}", r.train_seconds),
                    r.n_clusters.to_string(),
                    r.n_pure.to_string(),
                    r.n_local_model.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}
