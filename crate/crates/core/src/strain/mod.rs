//! Strain similarity over feature vectors and the name-consistency report.
//!
//! Profiles are records with schema_ref `strain/profile` carrying
//! `sample_id`, `strain_name` and a `features` map of numbers. Feature names
//! are the map keys in code-point order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::{FieldValue, MetaRecord};

pub const PROFILE_SCHEMA: &str = "strain/profile";

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StrainError {
    #[error("feature dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch { left: Vec<String>, right: Vec<String> },
    #[error("invalid profile {sample_id:?}: {message}")]
    InvalidProfile { sample_id: String, message: String },
    #[error("sample id {0:?} appears more than once")]
    DuplicateSample(String),
    #[error("unknown sample {0:?}")]
    UnknownSample(String),
    #[error("{0}")]
    Precondition(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainProfile {
    pub sample_id: String,
    pub strain_name: String,
    pub features: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl StrainProfile {
    pub fn new(
        sample_id: impl Into<String>,
        strain_name: impl Into<String>,
        feature_names: Vec<String>,
        features: Vec<f64>,
    ) -> Result<Self, StrainError> {
        let p = StrainProfile {
            sample_id: sample_id.into(),
            strain_name: strain_name.into(),
            features,
            feature_names,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), StrainError> {
        let bad = |message: &str| {
            Err(StrainError::InvalidProfile {
                sample_id: self.sample_id.clone(),
                message: message.to_owned(),
            })
        };
        if self.features.is_empty() || self.features.len() != self.feature_names.len() {
            return bad("needs one or more features, one per feature name");
        }
        if self.features.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return bad("features must be finite and non-negative");
        }
        if self.features.iter().all(|f| *f == 0.0) {
            return bad("features are all zero");
        }
        Ok(())
    }

    /// Reads a `strain/profile` record.
    pub fn from_record(r: &MetaRecord) -> Result<Self, StrainError> {
        let sample_id = r.text("sample_id").unwrap_or_default().to_owned();
        let invalid = |message: String| StrainError::InvalidProfile {
            sample_id: sample_id.clone(),
            message,
        };
        if sample_id.is_empty() {
            return Err(invalid(format!("record {} has no sample_id", r.id())));
        }
        let name = r.text("strain_name").ok_or_else(|| invalid("missing strain_name".into()))?;
        let Some(FieldValue::Map(features)) = r.fields().get("features") else {
            return Err(invalid("missing features map".into()));
        };
        let mut names = Vec::with_capacity(features.len());
        let mut values = Vec::with_capacity(features.len());
        for (k, v) in features {
            let x = v.as_f64().ok_or_else(|| invalid(format!("feature {k:?} is not a number")))?;
            names.push(k.clone());
            values.push(x);
        }
        StrainProfile::new(sample_id.clone(), name, names, values)
    }
}

fn same_dims(a: &StrainProfile, b: &StrainProfile) -> Result<(), StrainError> {
    if a.feature_names != b.feature_names {
        return Err(StrainError::DimensionMismatch {
            left: a.feature_names.clone(),
            right: b.feature_names.clone(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Cosine similarity, clamped to [0, 1]. Each product `x*y` is commutative
/// and the accumulation runs in index order, so swapping arguments gives
/// the bit-identical result.
fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = dot(a, a).sqrt() * dot(b, b).sqrt();
    (dot(a, b) / denom).clamp(0.0, 1.0)
}

pub fn similarity(a: &StrainProfile, b: &StrainProfile) -> Result<f64, StrainError> {
    same_dims(a, b)?;
    Ok(cosine(&a.features, &b.features))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub sample_id: String,
    pub similarity: f64,
}

fn rank(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then_with(|| a.sample_id.cmp(&b.sample_id))
}

/// Top `k` of `corpus` by similarity to `query`, the query's own sample_id
/// excluded.
pub fn nearest(query: &StrainProfile, corpus: &[StrainProfile], k: usize) -> Result<Vec<Neighbor>, StrainError> {
    if k == 0 {
        return Err(StrainError::Precondition("k must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(StrainError::Precondition("corpus is empty".into()));
    }
    let mut out = Vec::with_capacity(corpus.len());
    for p in corpus {
        same_dims(query, p)?;
        if p.sample_id != query.sample_id {
            out.push(Neighbor {
                sample_id: p.sample_id.clone(),
                similarity: cosine(&query.features, &p.features),
            });
        }
    }
    out.sort_by(rank);
    out.truncate(k);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InconsistentPair {
    pub sample_id: String,
    pub nearest_sample_id: String,
    pub sample_name: String,
    pub nearest_name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub consistency_score: f64,
    pub evaluated: u64,
    pub inconsistent_pairs: Vec<InconsistentPair>,
    pub excluded_singletons: Vec<String>,
}

/// For each sample whose name is shared by another sample, checks whether
/// its nearest neighbor bears the same name. With nothing to evaluate the
/// score is 1.0 and `evaluated` is 0.
pub fn name_consistency(corpus: &[StrainProfile]) -> Result<ConsistencyReport, StrainError> {
    if corpus.len() < 2 {
        return Err(StrainError::Precondition("need at least 2 samples".into()));
    }
    let mut seen = HashSet::new();
    for p in corpus {
        same_dims(&corpus[0], p)?;
        if !seen.insert(p.sample_id.as_str()) {
            return Err(StrainError::DuplicateSample(p.sample_id.clone()));
        }
    }
    let mut per_name: BTreeMap<&str, usize> = BTreeMap::new();
    for p in corpus {
        *per_name.entry(&p.strain_name).or_default() += 1;
    }
    let mut order: Vec<&StrainProfile> = corpus.iter().collect();
    order.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let (mut evaluated, mut consistent) = (0u64, 0u64);
    let mut pairs = Vec::new();
    let mut singletons = Vec::new();
    for p in order {
        if per_name[p.strain_name.as_str()] < 2 {
            singletons.push(p.sample_id.clone());
            continue;
        }
        let best = corpus
            .iter()
            .filter(|q| q.sample_id != p.sample_id)
            .map(|q| (q, cosine(&p.features, &q.features)))
            .min_by(|(qa, sa), (qb, sb)| sb.total_cmp(sa).then_with(|| qa.sample_id.cmp(&qb.sample_id)))
            .map(|(q, _)| q)
            .expect("corpus has another sample");
        evaluated += 1;
        if best.strain_name == p.strain_name {
            consistent += 1;
        } else {
            pairs.push(InconsistentPair {
                sample_id: p.sample_id.clone(),
                nearest_sample_id: best.sample_id.clone(),
                sample_name: p.strain_name.clone(),
                nearest_name: best.strain_name.clone(),
            });
        }
    }
    Ok(ConsistencyReport {
        consistency_score: if evaluated == 0 { 1.0 } else { consistent as f64 / evaluated as f64 },
        evaluated,
        inconsistent_pairs: pairs,
        excluded_singletons: singletons,
    })
}

/// Profiles from `records`; records of another schema are skipped.
pub fn profiles_of<'a>(records: impl IntoIterator<Item = &'a MetaRecord>) -> Result<Vec<StrainProfile>, StrainError> {
    let mut out: Vec<StrainProfile> = Vec::new();
    let mut seen = HashSet::new();
    for r in records {
        let p = StrainProfile::from_record(r)?;
        if !seen.insert(p.sample_id.clone()) {
            return Err(StrainError::DuplicateSample(p.sample_id));
        }
        out.push(p);
    }
    out.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: &str, name: &str, f: &[f64]) -> StrainProfile {
        let names = (0..f.len()).map(|i| format!("f{i}")).collect();
        StrainProfile::new(id, name, names, f.to_vec()).unwrap()
    }

    #[test]
    fn basic_similarities() {
        let a = p("a", "x", &[1.0, 0.0]);
        let b = p("b", "x", &[0.0, 1.0]);
        assert_eq!(similarity(&a, &b).unwrap(), 0.0);
        assert!((similarity(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
        let c = p("c", "x", &[12.0, 0.5, 1.0]);
        let d = p("d", "x", &[6.0, 1.0, 0.25]);
        let want = (72.0 + 0.5 + 0.25) / ((144.0f64 + 0.25 + 1.0).sqrt() * (36.0f64 + 1.0 + 0.0625).sqrt());
        assert!((similarity(&c, &d).unwrap() - want).abs() <= 1e-12);
        assert!(matches!(similarity(&a, &c), Err(StrainError::DimensionMismatch { .. })));
    }

    #[test]
    fn profile_invariants() {
        let names = vec!["thc".to_owned()];
        assert!(StrainProfile::new("s", "n", names.clone(), vec![0.0]).is_err());
        assert!(StrainProfile::new("s", "n", names.clone(), vec![-1.0]).is_err());
        assert!(StrainProfile::new("s", "n", names.clone(), vec![f64::NAN]).is_err());
        assert!(StrainProfile::new("s", "n", names, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn duplicate_ranks_first() {
        let q = p("q", "x", &[3.0, 1.0, 2.0]);
        let corpus = vec![p("a", "y", &[1.0, 1.0, 1.0]), p("dup", "x", &[3.0, 1.0, 2.0]), q.clone()];
        let got = nearest(&q, &corpus, 10).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].sample_id, "dup");
        assert!((got[0].similarity - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn singletons_only() {
        let r = name_consistency(&[p("a", "x", &[1.0]), p("b", "y", &[2.0])]).unwrap();
        assert_eq!(r.consistency_score, 1.0);
        assert_eq!(r.evaluated, 0);
        assert_eq!(r.excluded_singletons, vec!["a", "b"]);
    }
}
