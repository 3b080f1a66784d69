//! Labeled tabular data with mixed numeric/categorical features.
//!
//! Ingestion is CSV with a header row. Feature kinds come from a sidecar
//! schema file (`name,kind` per line, last line `target,<name>`) or are
//! inferred. Empty cells are [`Value::Missing`]; nothing is imputed here.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Numeric => f.write_str("numeric"),
            FeatureKind::Categorical => f.write_str("categorical"),
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "numerical" | "continuous" => Ok(FeatureKind::Numeric),
            "categorical" | "nominal" | "symbolic" => Ok(FeatureKind::Categorical),
            other => Err(Error::InvalidSchema(format!("unknown feature kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

/// Feature kinds and target name, as declared before the class set is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaDecl {
    pub features: Vec<Feature>,
    pub target: String,
}

impl SchemaDecl {
    /// Parses the sidecar format.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let (last, body) = lines
            .split_last()
            .ok_or(Error::InvalidSchema("schema file is empty".into()))?;
        let target = match last.split_once(',') {
            Some((key, name)) if key.trim() == "target" => name.trim().to_string(),
            _ => {
                return Err(Error::InvalidSchema(
                    "last schema line must be `target,<name>`".into(),
                ))
            }
        };
        let mut features = Vec::with_capacity(body.len());
        for line in body {
            let (name, kind) = line
                .split_once(',')
                .ok_or_else(|| Error::InvalidSchema(format!("malformed schema line `{line}`")))?;
            features.push(Feature {
                name: name.trim().to_string(),
                kind: kind.parse()?,
            });
        }
        let decl = SchemaDecl { features, target };
        decl.validate()?;
        Ok(decl)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_sidecar(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            out.push_str(&format!("{},{}\n", f.name, f.kind));
        }
        out.push_str(&format!("target,{}\n", self.target));
        out
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidSchema("no features declared".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
        }
        if seen.contains(self.target.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "target `{}` is also declared as a feature",
                self.target
            )));
        }
        Ok(())
    }
}

/// A complete schema: features, target and the ordered class label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<Feature>,
    pub target: String,
    pub classes: Vec<String>,
}

impl Schema {
    pub fn new(decl: SchemaDecl, classes: Vec<String>) -> Result<Self> {
        decl.validate()?;
        if classes.len() < 2 {
            return Err(Error::SingleClass(classes.len()));
        }
        Ok(Schema {
            features: decl.features,
            target: decl.target,
            classes,
        })
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn decl(&self) -> SchemaDecl {
        SchemaDecl {
            features: self.features.clone(),
            target: self.target.clone(),
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Numeric(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            Value::Categorical(s) => Some(s),
            _ => None,
        }
    }

    fn parse(raw: &str, kind: FeatureKind, row: usize, column: &str) -> Result<Self> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Ok(Value::Missing);
        }
        match kind {
            FeatureKind::Numeric => match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Value::Numeric(v)),
                _ => Err(Error::UnparseableNumber {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                }),
            },
            FeatureKind::Categorical => Ok(Value::Categorical(raw.to_string())),
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Numeric(v) => format!("{v}"),
            Value::Categorical(s) => s.clone(),
            Value::Missing => String::new(),
        }
    }
}

/// Feature rows plus labels when the input carried a target column.
pub type Unlabeled = (Vec<Vec<Value>>, Option<Vec<usize>>);

/// Rows of typed cells with class indices in `0..J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<Value>>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>, labels: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("dataset has no rows"));
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        let d = schema.n_features();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Arity {
                    row: i,
                    expected: d,
                    found: row.len(),
                });
            }
            for (v, f) in row.iter().zip(&schema.features) {
                let ok = match (v, f.kind) {
                    (Value::Missing, _) => true,
                    (Value::Numeric(x), FeatureKind::Numeric) => x.is_finite(),
                    (Value::Categorical(_), FeatureKind::Categorical) => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::SchemaMismatch(format!(
                        "row {i}: value {v:?} does not fit {} feature `{}`",
                        f.kind, f.name
                    )));
                }
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= schema.n_classes()) {
            return Err(Error::UnknownLabel {
                row: labels.iter().position(|&l| l == bad).unwrap_or(0),
                label: bad.to_string(),
            });
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
        })
    }

    /// Loads a CSV file, learning the class set in first-appearance order.
    pub fn load_csv(path: impl AsRef<Path>, decl: &SchemaDecl) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, decl, None)
    }

    /// Loads a CSV file against a fixed schema; labels outside its class set
    /// are rejected.
    pub fn load_csv_with_schema(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &schema.decl(), Some(&schema.classes))
    }

    /// Loads a CSV file inferring kinds: a column whose non-empty cells all
    /// parse as numbers is numeric. The target is the named column, or the
    /// last one.
    pub fn load_csv_inferred(path: impl AsRef<Path>, target: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decl = infer_schema(&bytes, target)?;
        Self::read_csv(bytes.as_slice(), &decl, None)
    }

    pub fn read_csv<R: std::io::Read>(
        reader: R,
        decl: &SchemaDecl,
        classes: Option<&[String]>,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::EmptyInput("csv file has no header"));
        }
        let column_of = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::SchemaMismatch(format!("column `{name}` not in csv header")))
        };
        let feature_cols = decl
            .features
            .iter()
            .map(|f| column_of(&f.name))
            .collect::<Result<Vec<_>>>()?;
        let target_col = column_of(&decl.target)?;

        let mut class_list: Vec<String> = classes.map(<[String]>::to_vec).unwrap_or_default();
        let mut class_ids: HashMap<String, usize> = class_list
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::Arity {
                    row: i,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            let row = decl
                .features
                .iter()
                .zip(&feature_cols)
                .map(|(f, &c)| Value::parse(&record[c], f.kind, i, &f.name))
                .collect::<Result<Vec<_>>>()?;
            let label = record[target_col].trim();
            if label.is_empty() {
                return Err(Error::MissingLabel { row: i });
            }
            let id = match class_ids.get(label) {
                Some(&id) => id,
                None if classes.is_some() => {
                    return Err(Error::UnknownLabel {
                        row: i,
                        label: label.to_string(),
                    })
                }
                None => {
                    class_list.push(label.to_string());
                    class_ids.insert(label.to_string(), class_list.len() - 1);
                    class_list.len() - 1
                }
            };
            rows.push(row);
            labels.push(id);
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput("csv file has no data rows"));
        }
        let schema = Schema::new(decl.clone(), class_list)?;
        Dataset::new(schema, rows, labels)
    }

    /// Reads rows for prediction: labels may be absent (no target column) or
    /// present (validated against the schema).
    pub fn read_unlabeled<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Unlabeled> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let feature_cols = schema
            .features
            .iter()
            .map(|f| {
                header.iter().position(|h| *h == f.name).ok_or_else(|| {
                    Error::SchemaMismatch(format!("column `{}` not in csv header", f.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let target_col = header.iter().position(|h| *h == schema.target);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::Arity {
                    row: i,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            rows.push(
                schema
                    .features
                    .iter()
                    .zip(&feature_cols)
                    .map(|(f, &c)| Value::parse(&record[c], f.kind, i, &f.name))
                    .collect::<Result<Vec<_>>>()?,
            );
            if let Some(tc) = target_col {
                let label = record[tc].trim();
                let id = schema.class_index(label).ok_or_else(|| Error::UnknownLabel {
                    row: i,
                    label: label.to_string(),
                })?;
                labels.push(id);
            }
        }
        Ok((rows, target_col.map(|_| labels)))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.features.iter().map(|f| f.name.as_str()).collect();
        header.push(&self.schema.target);
        wtr.write_record(&header)?;
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(Value::render).collect();
            rec.push(self.schema.classes[label].clone());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    /// Column `n` as a slice-of-references view.
    pub fn column(&self, n: usize) -> Vec<&Value> {
        self.rows.iter().map(|r| &r[n]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Sub-dataset over `indices` (in the given order), same schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn infer_schema(bytes: &[u8], target: Option<&str>) -> Result<SchemaDecl> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 2 {
        return Err(Error::EmptyInput("csv needs at least one feature and a target"));
    }
    let target = match target {
        Some(t) => t.to_string(),
        None => header[header.len() - 1].clone(),
    };
    let mut numeric = vec![true; header.len()];
    let mut seen_value = vec![false; header.len()];
    for record in rdr.records() {
        let record = record?;
        for (c, cell) in record.iter().enumerate().take(header.len()) {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            seen_value[c] = true;
            if numeric[c] && !cell.parse::<f64>().is_ok_and(f64::is_finite) {
                numeric[c] = false;
            }
        }
    }
    let features = header
        .iter()
        .enumerate()
        .filter(|(_, h)| **h != target)
        .map(|(c, h)| Feature {
            name: h.clone(),
            kind: if numeric[c] && seen_value[c] {
                FeatureKind::Numeric
            } else {
                FeatureKind::Categorical
            },
        })
        .collect();
    let decl = SchemaDecl { features, target };
    decl.validate()?;
    Ok(decl)
}

/// Stratified k-fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// (train, test) index lists for fold `f`, both ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut test = self.folds[f].clone();
        test.sort_unstable();
        let mut train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        train.sort_unstable();
        (train, test)
    }
}

/// Per-fold class counts: entry `(f, c)` is the floor or ceiling of
/// `|f| * n_c / m`, with fold sizes within one of `m / k` and every row and
/// column summing exactly. The rounding is found as an integral flow.
fn fold_class_counts(class_sizes: &[usize], k: usize) -> Vec<Vec<usize>> {
    let m: usize = class_sizes.iter().sum();
    let j = class_sizes.len();
    let sizes: Vec<usize> = (0..k).map(|f| m / k + usize::from(f < m % k)).collect();
    let mut counts: Vec<Vec<usize>> = sizes
        .iter()
        .map(|&s| class_sizes.iter().map(|&n| s * n / m).collect())
        .collect();
    // Nodes: source, folds, classes, sink.
    let (source, sink) = (0, k + j + 1);
    let mut graph = FlowGraph::new(k + j + 2);
    for (f, (&size, row)) in sizes.iter().zip(&counts).enumerate() {
        let short = size - row.iter().sum::<usize>();
        graph.add_edge(source, 1 + f, short);
    }
    let mut cell_edges = Vec::new();
    for (f, &size) in sizes.iter().enumerate() {
        for (c, &n) in class_sizes.iter().enumerate() {
            if size * n % m != 0 {
                cell_edges.push((f, c, graph.add_edge(1 + f, 1 + k + c, 1)));
            }
        }
    }
    for c in 0..j {
        let short = class_sizes[c] - counts.iter().map(|row| row[c]).sum::<usize>();
        graph.add_edge(1 + k + c, sink, short);
    }
    graph.max_flow(source, sink);
    for (f, c, e) in cell_edges {
        counts[f][c] += graph.flow(e);
    }
    counts
}

/// Residual graph for a small integral max-flow (Edmonds-Karp).
struct FlowGraph {
    adjacency: Vec<Vec<usize>>,
    to: Vec<usize>,
    capacity: Vec<usize>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        FlowGraph {
            adjacency: vec![Vec::new(); n],
            to: Vec::new(),
            capacity: Vec::new(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, capacity: usize) -> usize {
        let e = self.to.len();
        self.adjacency[from].push(e);
        self.to.push(to);
        self.capacity.push(capacity);
        self.adjacency[to].push(e + 1);
        self.to.push(from);
        self.capacity.push(0);
        e
    }

    /// Flow on forward edge `e`, read from its reverse residual.
    fn flow(&self, e: usize) -> usize {
        self.capacity[e + 1]
    }

    fn max_flow(&mut self, source: usize, sink: usize) {
        let n = self.adjacency.len();
        loop {
            let mut via: Vec<Option<usize>> = vec![None; n];
            let mut queue = std::collections::VecDeque::from([source]);
            let mut reached = false;
            while let Some(u) = queue.pop_front() {
                for &e in &self.adjacency[u] {
                    let v = self.to[e];
                    if self.capacity[e] > 0 && v != source && via[v].is_none() {
                        via[v] = Some(e);
                        if v == sink {
                            reached = true;
                            break;
                        }
                        queue.push_back(v);
                    }
                }
                if reached {
                    break;
                }
            }
            if !reached {
                return;
            }
            let mut push = usize::MAX;
            let mut v = sink;
            while let Some(e) = via[v] {
                push = push.min(self.capacity[e]);
                v = self.to[e ^ 1];
            }
            let mut v = sink;
            while let Some(e) = via[v] {
                self.capacity[e] -= push;
                self.capacity[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
        }
    }
}

/// Shuffles each class's indices with a seeded generator, then hands each
/// fold its share of every class. Fold sizes differ by at most one and each
/// per-fold class count is within one of `|fold| * prior(class)`.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} folds, need at least 2")));
    }
    if k > labels.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} folds exceeds m = {} instances",
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let class_sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let counts = fold_class_counts(&class_sizes, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let mut rest = members.as_slice();
        for (f, fold) in folds.iter_mut().enumerate() {
            let (take, tail) = rest.split_at(counts[f][c]);
            fold.extend_from_slice(take);
            rest = tail;
        }
    }
    Ok(FoldPlan { seed, folds })
}
