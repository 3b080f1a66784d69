//! Unsupervised encodings used by the plain k-means baseline: rank
//! normalization for numeric features and equal-frequency basic grouping
//! with one-hot coding for categorical ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind, Value};
use crate::error::{Error, Result};

pub const DEFAULT_RANK_LEVELS: usize = 100;
pub const DEFAULT_GROUPS: usize = 10;

/// Rank-to-`[0, 1]` scaler fitted on training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankNormalizer {
    pub levels: usize,
    /// Sorted non-missing training values.
    pub sorted: Vec<f64>,
}

impl RankNormalizer {
    pub fn fit(values: &[Option<f64>], levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidParameter("rank normalization needs H >= 1".into()));
        }
        let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
        sorted.sort_by(f64::total_cmp);
        Ok(RankNormalizer { levels, sorted })
    }

    /// `ceil(r * H / m) / H` with `r` the average 1-based rank of `x` among
    /// the training values (ties averaged; unseen values rank between their
    /// neighbors). Missing values map to 0.5.
    pub fn transform(&self, x: Option<f64>) -> f64 {
        let m = self.sorted.len();
        let Some(x) = x else { return 0.5 };
        if m == 0 {
            return 0.5;
        }
        let less = self.sorted.partition_point(|&v| v < x);
        let equal = self.sorted[less..].partition_point(|&v| v <= x);
        // Twice the average rank, kept integral.
        let twice_rank = (2 * less + equal + 1).min(2 * m);
        let h = self.levels;
        let bucket = (twice_rank * h).div_ceil(2 * m);
        bucket as f64 / h as f64
    }
}

/// Rank-normalizes `values` against themselves.
pub fn rank_normalize(values: &[f64], levels: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("rank normalization of an empty column"));
    }
    let opts: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
    let rn = RankNormalizer::fit(&opts, levels)?;
    Ok(values.iter().map(|&v| rn.transform(Some(v))).collect())
}

/// Equal-frequency grouping of categorical values with one-hot output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicGrouping {
    pub max_groups: usize,
    /// Token to group; the missing value is the empty token.
    pub groups: BTreeMap<String, usize>,
    pub n_groups: usize,
}

impl BasicGrouping {
    /// Tokens sorted by decreasing frequency (then lexicographically) are
    /// cut into runs of near-equal cumulative frequency.
    pub fn fit(values: &[Option<&str>], max_groups: usize) -> Result<Self> {
        if max_groups == 0 {
            return Err(Error::InvalidParameter("basic grouping needs g >= 1".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("basic grouping of an empty column"));
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for v in values {
            *freq.entry(v.unwrap_or("")).or_default() += 1;
        }
        let mut tokens: Vec<(&str, usize)> = freq.into_iter().collect();
        tokens.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let total = values.len();
        let mut groups = BTreeMap::new();
        let mut raw_to_compact: BTreeMap<usize, usize> = BTreeMap::new();
        let mut cum = 0usize;
        for (tok, f) in tokens {
            let raw = cum * max_groups / total;
            let next = raw_to_compact.len();
            let g = *raw_to_compact.entry(raw).or_insert(next);
            groups.insert(tok.to_string(), g);
            cum += f;
        }
        let n_groups = raw_to_compact.len();
        Ok(BasicGrouping {
            max_groups,
            groups,
            n_groups,
        })
    }

    pub fn group_of(&self, value: Option<&str>) -> Option<usize> {
        self.groups.get(value.unwrap_or("")).copied()
    }

    /// One-hot vector over groups; unseen tokens give all zeros.
    pub fn one_hot(&self, value: Option<&str>) -> Vec<bool> {
        let mut out = vec![false; self.n_groups];
        if let Some(g) = self.group_of(value) {
            out[g] = true;
        }
        out
    }
}

/// Groups `values` into at most `g` equal-frequency groups and one-hot
/// encodes every instance.
pub fn bgb_encode(values: &[Option<&str>], g: usize) -> Result<Vec<Vec<bool>>> {
    let bg = BasicGrouping::fit(values, g)?;
    Ok(values.iter().map(|v| bg.one_hot(*v)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineFeature {
    Numeric(RankNormalizer),
    Categorical(BasicGrouping),
}

/// Unsupervised encoder: one rank-normalized column per numeric feature,
/// one-hot group columns per categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEncoder {
    pub features: Vec<BaselineFeature>,
}

impl BaselineEncoder {
    pub fn fit(data: &Dataset, levels: usize, groups: usize) -> Result<Self> {
        let features = data
            .schema()
            .features
            .iter()
            .enumerate()
            .map(|(n, f)| {
                let col = data.column(n);
                Ok(match f.kind {
                    FeatureKind::Numeric => BaselineFeature::Numeric(RankNormalizer::fit(
                        &col.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                        levels,
                    )?),
                    FeatureKind::Categorical => BaselineFeature::Categorical(BasicGrouping::fit(
                        &col.iter().map(|v| v.as_token()).collect::<Vec<_>>(),
                        groups,
                    )?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BaselineEncoder { features })
    }

    pub fn encoded_len(&self) -> usize {
        self.features
            .iter()
            .map(|f| match f {
                BaselineFeature::Numeric(_) => 1,
                BaselineFeature::Categorical(g) => g.n_groups,
            })
            .sum()
    }

    pub fn encode(&self, instance: &[Value]) -> Result<Vec<f64>> {
        if instance.len() != self.features.len() {
            return Err(Error::SchemaMismatch(format!(
                "instance has {} values, encoder has {} features",
                instance.len(),
                self.features.len()
            )));
        }
        let mut out = Vec::with_capacity(self.encoded_len());
        for (f, v) in self.features.iter().zip(instance) {
            match f {
                BaselineFeature::Numeric(rn) => out.push(rn.transform(v.as_f64())),
                BaselineFeature::Categorical(g) => {
                    let tok = match v {
                        Value::Missing => None,
                        other => other.as_token(),
                    };
                    out.extend(g.one_hot(tok).into_iter().map(|b| if b { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }

    /// Coarse cell per feature for profiling: deciles of the normalized rank
    /// for numeric features, the group for categorical ones.
    pub fn cells(&self, instance: &[Value]) -> Vec<Option<usize>> {
        self.features
            .iter()
            .zip(instance)
            .map(|(f, v)| match f {
                BaselineFeature::Numeric(rn) => {
                    v.as_f64().map(|x| ((rn.transform(Some(x)) * 10.0).ceil() as usize).clamp(1, 10) - 1)
                }
                BaselineFeature::Categorical(g) => g.group_of(match v {
                    Value::Missing => None,
                    other => other.as_token(),
                }),
            })
            .collect()
    }

    pub fn n_cells(&self, n: usize) -> usize {
        match &self.features[n] {
            BaselineFeature::Numeric(_) => 10,
            BaselineFeature::Categorical(g) => g.n_groups,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_formula_five_values() {
        let out = rank_normalize(&[10.0, 20.0, 30.0, 40.0, 50.0], DEFAULT_RANK_LEVELS).unwrap();
        assert_eq!(out, vec![0.2, 0.4, 0.6, 0.8, 1.0]);
    }

    #[test]
    fn constant_column_all_equal() {
        let out = rank_normalize(&[3.0; 7], 100).unwrap();
        assert!(out.iter().all(|&v| v == out[0]));
        // Average rank 4 of 7: ceil(400/7) = 58.
        assert_eq!(out[0], 0.58);
    }

    #[test]
    fn rank_errors() {
        assert!(rank_normalize(&[], 100).is_err());
        assert!(rank_normalize(&[1.0], 0).is_err());
    }

    #[test]
    fn bgb_fewer_tokens_than_groups() {
        let vals = [Some("a"), Some("b"), Some("c"), Some("a")];
        let enc = bgb_encode(&vals, DEFAULT_GROUPS).unwrap();
        assert!(enc.iter().all(|v| v.len() == 3));
        assert!(enc.iter().all(|v| v.iter().filter(|&&b| b).count() == 1));
    }

    #[test]
    fn bgb_hundred_equifrequent_tokens() {
        let names: Vec<String> = (0..100).map(|i| format!("t{i:03}")).collect();
        let vals: Vec<Option<&str>> = names.iter().flat_map(|n| [Some(n.as_str()); 3]).collect();
        let bg = BasicGrouping::fit(&vals, 10).unwrap();
        assert_eq!(bg.n_groups, 10);
        let mut sizes = vec![0; 10];
        for g in bg.groups.values() {
            sizes[*g] += 1;
        }
        assert_eq!(sizes, vec![10; 10]);
    }

    #[test]
    fn unseen_token_is_all_zero() {
        let bg = BasicGrouping::fit(&[Some("a"), Some("b")], 10).unwrap();
        assert!(bg.one_hot(Some("zzz")).iter().all(|&b| !b));
    }
}
