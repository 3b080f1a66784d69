use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::modl::{self, MAX_ELEMENTARY_INTERVALS};
use crate::dataset::{Dataset, FeatureKind, Value};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Laplace smoothing constant for per-cell conditional probabilities.
pub const SMOOTHING: f64 = 1.0;

/// Supervised discretization of one numeric feature.
///
/// Intervals are right-closed: `(-inf, c1], (c1, c2], ..., (c_{I-1}, +inf)`.
/// When training data had missing values they get a dedicated last cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub cuts: Vec<f64>,
    /// Class counts per cell: the `I` intervals, then the missing cell if any.
    pub counts: Vec<Vec<usize>>,
    pub missing_cell: bool,
    /// Criterion value of the fitted partition and of the single interval,
    /// both over non-missing values.
    pub cost: f64,
    pub null_cost: f64,
}

impl IntervalPartition {
    pub fn n_intervals(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn interval_of(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c < x)
    }

    pub fn cell(&self, value: &Value) -> Option<usize> {
        match value {
            Value::Numeric(x) => Some(self.interval_of(*x)),
            Value::Missing if self.missing_cell => Some(self.cuts.len() + 1),
            _ => None,
        }
    }
}

/// Supervised grouping of the values of one categorical feature. A missing
/// value is grouped like any other token, under the empty-string key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GroupingRepr", into = "GroupingRepr")]
pub struct ValueGrouping {
    pub groups: Vec<Vec<String>>,
    pub counts: Vec<Vec<usize>>,
    /// Group holding the missing token, if missing values were seen.
    pub missing_group: Option<usize>,
    pub cost: f64,
    pub null_cost: f64,
    index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct GroupingRepr {
    groups: Vec<Vec<String>>,
    counts: Vec<Vec<usize>>,
    missing_group: Option<usize>,
    cost: f64,
    null_cost: f64,
}

impl From<GroupingRepr> for ValueGrouping {
    fn from(r: GroupingRepr) -> Self {
        ValueGrouping::new(r.groups, r.counts, r.missing_group, r.cost, r.null_cost)
    }
}

impl From<ValueGrouping> for GroupingRepr {
    fn from(g: ValueGrouping) -> Self {
        GroupingRepr {
            groups: g.groups,
            counts: g.counts,
            missing_group: g.missing_group,
            cost: g.cost,
            null_cost: g.null_cost,
        }
    }
}

impl ValueGrouping {
    fn new(
        groups: Vec<Vec<String>>,
        counts: Vec<Vec<usize>>,
        missing_group: Option<usize>,
        cost: f64,
        null_cost: f64,
    ) -> Self {
        let index = groups
            .iter()
            .enumerate()
            .flat_map(|(g, toks)| toks.iter().map(move |t| (t.clone(), g)))
            .collect();
        ValueGrouping {
            groups,
            counts,
            missing_group,
            cost,
            null_cost,
            index,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Unseen tokens (and missing values never seen in training) map to no
    /// cell.
    pub fn cell(&self, value: &Value) -> Option<usize> {
        match value {
            Value::Categorical(t) => self.group_of(t),
            Value::Missing => self.missing_group,
            Value::Numeric(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Partition {
    Numeric(IntervalPartition),
    Categorical(ValueGrouping),
}

impl Partition {
    pub fn n_cells(&self) -> usize {
        self.counts().len()
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        match self {
            Partition::Numeric(p) => &p.counts,
            Partition::Categorical(g) => &g.counts,
        }
    }

    pub fn cell(&self, value: &Value) -> Option<usize> {
        match self {
            Partition::Numeric(p) => p.cell(value),
            Partition::Categorical(g) => g.cell(value),
        }
    }

    /// Normalized compression gain over the single-cell partition.
    pub fn level(&self) -> f64 {
        match self {
            Partition::Numeric(p) => modl::level(p.cost, p.null_cost),
            Partition::Categorical(g) => modl::level(g.cost, g.null_cost),
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Partition::Numeric(_) => FeatureKind::Numeric,
            Partition::Categorical(_) => FeatureKind::Categorical,
        }
    }

    /// Short human-readable label of each cell.
    pub fn cell_labels(&self) -> Vec<String> {
        match self {
            Partition::Numeric(p) => {
                let mut out = Vec::with_capacity(p.counts.len());
                let n = p.cuts.len();
                for i in 0..=n {
                    let lo = if i == 0 { "-inf".to_string() } else { format!("{}", p.cuts[i - 1]) };
                    let hi = if i == n { "+inf".to_string() } else { format!("{}", p.cuts[i]) };
                    out.push(format!("({lo}, {hi}]"));
                }
                if p.missing_cell {
                    out.push("<missing>".into());
                }
                out
            }
            Partition::Categorical(g) => g
                .groups
                .iter()
                .map(|toks| {
                    let names: Vec<&str> = toks
                        .iter()
                        .map(|t| if t.is_empty() { "<missing>" } else { t.as_str() })
                        .collect();
                    format!("{{{}}}", names.join(", "))
                })
                .collect(),
        }
    }
}

fn check_inputs(len: usize, labels: &[usize], j: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::EmptyInput("no values to partition"));
    }
    if len != labels.len() {
        return Err(Error::LengthMismatch {
            left: len,
            right: labels.len(),
        });
    }
    if j == 0 || labels.iter().any(|&l| l >= j) {
        return Err(Error::InvalidParameter(format!("labels must lie in 0..{j}")));
    }
    Ok(())
}

/// Supervised discretization of a numeric feature. `None` is a missing value.
pub fn discretize_numeric(values: &[Option<f64>], labels: &[usize], j: usize) -> Result<IntervalPartition> {
    check_inputs(values.len(), labels, j)?;
    let mut present: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    let mut missing = vec![0usize; j];
    for (v, &l) in values.iter().zip(labels) {
        match v {
            Some(x) if x.is_finite() => present.push((*x, l)),
            Some(_) => return Err(Error::InvalidParameter("non-finite numeric value".into())),
            None => missing[l] += 1,
        }
    }
    let has_missing = missing.iter().any(|&c| c > 0);
    if present.is_empty() {
        let mut counts = vec![vec![0; j]];
        counts.push(missing);
        return Ok(IntervalPartition {
            cuts: Vec::new(),
            counts,
            missing_cell: true,
            cost: 0.0,
            null_cost: 0.0,
        });
    }
    present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // Elementary cells: one per distinct value, with its upper value.
    let mut distinct: Vec<(f64, Vec<usize>)> = Vec::new();
    for &(x, l) in &present {
        match distinct.last_mut() {
            Some((v, c)) if *v == x => c[l] += 1,
            _ => {
                let mut c = vec![0; j];
                c[l] = 1;
                distinct.push((x, c));
            }
        }
    }
    let (cells, uppers) = prebin(&distinct, present.len(), j);
    let solution = modl::optimize_contiguous(&cells, j);

    let mut counts = Vec::with_capacity(solution.ends.len() + 1);
    let mut cuts = Vec::with_capacity(solution.ends.len().saturating_sub(1));
    let mut start = 0;
    for &end in &solution.ends {
        let mut c = vec![0; j];
        for cell in &cells[start..end] {
            for k in 0..j {
                c[k] += cell[k];
            }
        }
        counts.push(c);
        if end < cells.len() {
            // Midpoint between the last value of this interval and the first of the next.
            let lo = uppers[end - 1];
            let hi = lower_of(&distinct, &uppers, end);
            cuts.push(lo / 2.0 + hi / 2.0);
        }
        start = end;
    }
    let totals: Vec<usize> = (0..j).map(|k| cells.iter().map(|c| c[k]).sum()).collect();
    let null_cost = modl::discretization_cost(std::slice::from_ref(&totals));
    if has_missing {
        counts.push(missing);
    }
    Ok(IntervalPartition {
        cuts,
        counts,
        missing_cell: has_missing,
        cost: solution.cost,
        null_cost,
    })
}

/// Smallest distinct value falling in pre-binned cell `cell`.
fn lower_of(distinct: &[(f64, Vec<usize>)], uppers: &[f64], cell: usize) -> f64 {
    let prev_upper = uppers[cell - 1];
    let pos = distinct.partition_point(|(v, _)| *v <= prev_upper);
    distinct[pos].0
}

/// Groups distinct values into at most `MAX_ELEMENTARY_INTERVALS` cells of
/// roughly equal frequency, never splitting a distinct value. Returns cell
/// class counts and each cell's largest value.
fn prebin(distinct: &[(f64, Vec<usize>)], m: usize, j: usize) -> (Vec<Vec<usize>>, Vec<f64>) {
    if distinct.len() <= MAX_ELEMENTARY_INTERVALS {
        return (
            distinct.iter().map(|(_, c)| c.clone()).collect(),
            distinct.iter().map(|(v, _)| *v).collect(),
        );
    }
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(MAX_ELEMENTARY_INTERVALS);
    let mut uppers = Vec::with_capacity(MAX_ELEMENTARY_INTERVALS);
    let mut seen = 0usize;
    let mut current = vec![0usize; j];
    for (v, c) in distinct {
        for k in 0..j {
            current[k] += c[k];
        }
        seen += c.iter().sum::<usize>();
        // Close the bin once the running count reaches the next quantile.
        let target = (cells.len() + 1) * m / MAX_ELEMENTARY_INTERVALS;
        if seen >= target {
            cells.push(std::mem::replace(&mut current, vec![0; j]));
            uppers.push(*v);
        }
    }
    if current.iter().any(|&c| c > 0) {
        cells.push(current);
        uppers.push(distinct[distinct.len() - 1].0);
    }
    (cells, uppers)
}

/// Supervised grouping of a categorical feature. `None` is a missing value,
/// treated as its own token.
pub fn group_categorical(values: &[Option<&str>], labels: &[usize], j: usize) -> Result<ValueGrouping> {
    check_inputs(values.len(), labels, j)?;
    // Tokens in lexicographic order (missing = "" sorts first) so the result
    // does not depend on row order.
    let mut table: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut saw_missing = false;
    for (v, &l) in values.iter().zip(labels) {
        let key = match v {
            Some(t) => *t,
            None => {
                saw_missing = true;
                ""
            }
        };
        table.entry(key).or_insert_with(|| vec![0; j])[l] += 1;
    }
    let tokens: Vec<&str> = table.keys().copied().collect();
    let cats: Vec<Vec<usize>> = table.values().cloned().collect();
    let solution = modl::optimize_grouping(&cats, j);

    let mut groups = vec![Vec::new(); solution.n_groups];
    let mut counts = vec![vec![0; j]; solution.n_groups];
    for (c, &g) in solution.assignment.iter().enumerate() {
        groups[g].push(tokens[c].to_string());
        for k in 0..j {
            counts[g][k] += cats[c][k];
        }
    }
    let totals: Vec<usize> = (0..j).map(|k| cats.iter().map(|c| c[k]).sum()).collect();
    let null_cost = modl::grouping_cost(cats.len(), std::slice::from_ref(&totals));
    let missing_group = if saw_missing {
        Some(solution.assignment[tokens.iter().position(|t| t.is_empty()).unwrap_or(0)])
    } else {
        None
    };
    Ok(ValueGrouping::new(groups, counts, missing_group, solution.cost, null_cost))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCodebook {
    pub name: String,
    #[serde(flatten)]
    pub partition: Partition,
}

/// Per-feature supervised partitions plus class statistics; defines the
/// log-likelihood redescription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub features: Vec<FeatureCodebook>,
    pub class_counts: Vec<usize>,
    pub priors: Vec<f64>,
    pub smoothing: f64,
}

/// Cell index per feature for one instance; `None` means "no informative
/// cell" (uniform likelihood).
pub type Cells = Vec<Option<usize>>;

impl Codebook {
    /// Fits one partition per feature on the training data.
    pub fn fit(data: &Dataset, exec: Execution) -> Result<Codebook> {
        let j = data.n_classes();
        let labels = data.labels();
        let features = par::try_map_range(exec, data.n_features(), |n| {
            let feature = &data.schema().features[n];
            let column = data.column(n);
            let partition = match feature.kind {
                FeatureKind::Numeric => {
                    let values: Vec<Option<f64>> = column.iter().map(|v| v.as_f64()).collect();
                    Partition::Numeric(discretize_numeric(&values, labels, j)?)
                }
                FeatureKind::Categorical => {
                    let values: Vec<Option<&str>> = column.iter().map(|v| v.as_token()).collect();
                    Partition::Categorical(group_categorical(&values, labels, j)?)
                }
            };
            Ok::<_, Error>(FeatureCodebook {
                name: feature.name.clone(),
                partition,
            })
        })?;
        let class_counts = data.class_counts();
        let m = data.len() as f64;
        let priors = class_counts.iter().map(|&c| c as f64 / m).collect();
        Ok(Codebook {
            features,
            class_counts,
            priors,
            smoothing: SMOOTHING,
        })
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    /// Length of an encoded instance, `d * J`.
    pub fn encoded_len(&self) -> usize {
        self.n_features() * self.n_classes()
    }

    pub fn cells(&self, instance: &[Value]) -> Result<Cells> {
        if instance.len() != self.n_features() {
            return Err(Error::SchemaMismatch(format!(
                "instance has {} values, codebook has {} features",
                instance.len(),
                self.n_features()
            )));
        }
        Ok(self
            .features
            .iter()
            .zip(instance)
            .map(|(f, v)| f.partition.cell(v))
            .collect())
    }

    /// Smoothed `ln P(cell | C_j)` for feature `n`; `None` is the uniform
    /// fallback `ln(1 / #cells)`.
    pub fn log_likelihood(&self, n: usize, cell: Option<usize>, j: usize) -> f64 {
        let p = &self.features[n].partition;
        let n_cells = p.n_cells() as f64;
        match cell {
            Some(c) => {
                let class_total: usize = p.counts().iter().map(|cc| cc[j]).sum();
                ((p.counts()[c][j] as f64 + self.smoothing)
                    / (class_total as f64 + self.smoothing * n_cells))
                    .ln()
            }
            None => -(n_cells.ln()),
        }
    }

    /// Component `(n, j)` at index `n * J + j` is `ln P(X^(n) = x | C_j)`.
    pub fn encode_cells(&self, cells: &[Option<usize>]) -> Vec<f64> {
        let j = self.n_classes();
        let mut out = Vec::with_capacity(self.encoded_len());
        for (n, &cell) in cells.iter().enumerate() {
            for k in 0..j {
                out.push(self.log_likelihood(n, cell, k));
            }
        }
        out
    }

    pub fn encode(&self, instance: &[Value]) -> Result<Vec<f64>> {
        Ok(self.encode_cells(&self.cells(instance)?))
    }

    pub fn levels(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.partition.level()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Feature, Schema, SchemaDecl};

    #[test]
    fn separable_six_values_two_intervals() {
        let values: Vec<Option<f64>> = (1..=6).map(|v| Some(v as f64)).collect();
        let p = discretize_numeric(&values, &[0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(p.counts, vec![vec![3, 0], vec![0, 3]]);
        assert_eq!(p.cuts, vec![3.5]);
    }

    #[test]
    fn constant_feature_single_interval() {
        let values = vec![Some(2.0); 10];
        let labels = [0, 1, 0, 1, 0, 1, 1, 1, 0, 0];
        let p = discretize_numeric(&values, &labels, 2).unwrap();
        assert_eq!(p.n_intervals(), 1);
    }

    #[test]
    fn right_closed_cut_convention() {
        let p = IntervalPartition {
            cuts: vec![1.0, 2.0],
            counts: vec![vec![1, 0]; 3],
            missing_cell: false,
            cost: 0.0,
            null_cost: 0.0,
        };
        assert_eq!(p.interval_of(1.0), 0);
        assert_eq!(p.interval_of(1.5), 1);
        assert_eq!(p.interval_of(2.0), 1);
        assert_eq!(p.interval_of(2.5), 2);
        assert_eq!(p.cell(&Value::Missing), None);
    }

    #[test]
    fn missing_values_get_dedicated_cell() {
        let values = vec![Some(1.0), None, Some(3.0), None];
        let p = discretize_numeric(&values, &[0, 1, 0, 1], 2).unwrap();
        assert!(p.missing_cell);
        assert_eq!(p.counts.last().unwrap(), &vec![0, 2]);
        assert_eq!(p.cell(&Value::Missing), Some(p.n_intervals()));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(discretize_numeric(&[], &[], 2).is_err());
        assert!(group_categorical(&[], &[], 2).is_err());
    }

    #[test]
    fn grouping_examples() {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (tok, cls) in [("a", 0), ("b", 0), ("c", 1)] {
            for _ in 0..10 {
                values.push(Some(tok));
                labels.push(cls);
            }
        }
        let g = group_categorical(&values, &labels, 2).unwrap();
        assert_eq!(g.groups, vec![vec!["a".to_string(), "b".to_string()], vec!["c".to_string()]]);

        let single = group_categorical(&[Some("x"), Some("x"), Some("x")], &[0, 1, 0], 2).unwrap();
        assert_eq!(single.n_groups(), 1);
        assert_eq!(single.cell(&Value::Categorical("unseen".into())), None);
    }

    #[test]
    fn encode_formula_two_intervals() {
        // Class 1 counts [9, 1], class 2 counts [2, 8].
        let codebook = Codebook {
            features: vec![FeatureCodebook {
                name: "x".into(),
                partition: Partition::Numeric(IntervalPartition {
                    cuts: vec![0.0],
                    counts: vec![vec![9, 2], vec![1, 8]],
                    missing_cell: false,
                    cost: 0.0,
                    null_cost: 0.0,
                }),
            }],
            class_counts: vec![10, 10],
            priors: vec![0.5, 0.5],
            smoothing: 1.0,
        };
        let e = codebook.encode(&[Value::Numeric(-1.0)]).unwrap();
        assert!((e[0] - (10.0f64 / 12.0).ln()).abs() < 1e-12);
        assert!((e[1] - (3.0f64 / 12.0).ln()).abs() < 1e-12);
        assert!((e[0] + 0.18232).abs() < 1e-5 && (e[1] + 1.38629).abs() < 1e-5);
        // Missing without a missing cell: uniform over two cells.
        let m = codebook.encode(&[Value::Missing]).unwrap();
        assert_eq!(m, vec![-(2f64.ln()); 2]);
    }

    #[test]
    fn constant_features_encode_to_zero() {
        let schema = Schema::new(
            SchemaDecl {
                features: vec![
                    Feature { name: "a".into(), kind: FeatureKind::Numeric },
                    Feature { name: "b".into(), kind: FeatureKind::Categorical },
                ],
                target: "y".into(),
            },
            vec!["p".into(), "q".into(), "r".into()],
        )
        .unwrap();
        let rows: Vec<Vec<Value>> = (0..9)
            .map(|_| vec![Value::Numeric(1.0), Value::Categorical("k".into())])
            .collect();
        let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let ds = Dataset::new(schema, rows, labels).unwrap();
        let cb = Codebook::fit(&ds, Execution::Sequential).unwrap();
        assert_eq!(cb.features.len(), 2);
        assert!((cb.priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let e = cb.encode(&ds.rows()[0]).unwrap();
        assert_eq!(e.len(), 6);
        assert!(e.iter().all(|&x| x == 0.0));
    }
}
