//! Quadratic / linear-scan reference implementations.

use std::collections::{BTreeMap, BTreeSet};

use cdp_core::model::{FieldValue, MetaRecord, RecordId};

use cdp_core::strain::StrainProfile;

use crate::sha::{hex, sha256};

fn leaves<'a>(v: &'a FieldValue, out: &mut Vec<&'a str>) {
    match v {
        FieldValue::Text(s) => out.push(s),
        FieldValue::List(items) => items.iter().for_each(|x| leaves(x, out)),
        FieldValue::Map(m) => m.values().for_each(|x| leaves(x, out)),
        _ => {}
    }
}

/// Maximal runs of alphanumeric characters, lowercased.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(cur.to_lowercase());
            cur.clear();
        }
    }
    out
}

pub fn doc_tokens(r: &MetaRecord) -> Vec<String> {
    let mut ls = Vec::new();
    for v in r.fields().values() {
        leaves(v, &mut ls);
    }
    ls.into_iter().flat_map(tokens).collect()
}

fn distinct(docs: &[MetaRecord]) -> Vec<(RecordId, Vec<String>)> {
    let mut seen = BTreeSet::new();
    docs.iter().filter(|d| seen.insert(d.id())).map(|d| (d.id(), doc_tokens(d))).collect()
}

/// Documents sharing at least one token with the query, by plain scan.
pub fn linear_match(docs: &[MetaRecord], query: &str) -> BTreeSet<RecordId> {
    let q = tokens(query);
    distinct(docs)
        .into_iter()
        .filter(|(_, toks)| toks.iter().any(|t| q.contains(t)))
        .map(|(id, _)| id)
        .collect()
}

/// tf-idf straight from the definition: tf = count / length,
/// idf = ln(1 + N / (1 + df)), summed over distinct query terms.
pub fn tfidf_scores(docs: &[MetaRecord], query: &str) -> BTreeMap<RecordId, f64> {
    let docs = distinct(docs);
    let n = docs.len() as f64;
    let terms: BTreeSet<String> = tokens(query).into_iter().collect();
    let mut out = BTreeMap::new();
    for (id, toks) in &docs {
        let mut score = 0.0;
        let mut hit = false;
        for t in &terms {
            let count = toks.iter().filter(|x| *x == t).count();
            if count == 0 {
                continue;
            }
            hit = true;
            let df = docs.iter().filter(|(_, d)| d.contains(t)).count() as f64;
            score += count as f64 / toks.len() as f64 * (1.0 + n / (1.0 + df)).ln();
        }
        if hit {
            out.insert(*id, score);
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(0.0, 1.0)
}

/// Every other profile scored, fully sorted (similarity desc, id asc),
/// then cut to `k`.
pub fn nearest(query: &StrainProfile, corpus: &[StrainProfile], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = corpus
        .iter()
        .filter(|p| p.sample_id != query.sample_id)
        .map(|p| (p.sample_id.clone(), cosine(&query.features, &p.features)))
        .collect();
    all.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    all.truncate(k);
    all
}

#[derive(Debug, PartialEq)]
pub struct Consistency {
    pub score: f64,
    pub evaluated: u64,
    /// (sample, its nearest), sample ids ascending
    pub inconsistent: Vec<(String, String)>,
    pub singletons: Vec<String>,
}

pub fn consistency(corpus: &[StrainProfile]) -> Consistency {
    let mut ids: Vec<&StrainProfile> = corpus.iter().collect();
    ids.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let (mut evaluated, mut same) = (0u64, 0u64);
    let mut inconsistent = Vec::new();
    let mut singletons = Vec::new();
    for p in ids {
        let namesakes = corpus.iter().filter(|q| q.strain_name == p.strain_name).count();
        if namesakes < 2 {
            singletons.push(p.sample_id.clone());
            continue;
        }
        let (best, _) = nearest(p, corpus, 1).into_iter().next().unwrap();
        let best = corpus.iter().find(|q| q.sample_id == best).unwrap();
        evaluated += 1;
        if best.strain_name == p.strain_name {
            same += 1;
        } else {
            inconsistent.push((p.sample_id.clone(), best.sample_id.clone()));
        }
    }
    Consistency {
        score: if evaluated == 0 { 1.0 } else { same as f64 / evaluated as f64 },
        evaluated,
        inconsistent,
        singletons,
    }
}

/// Independent canonical writer: serde_json for strings and numbers,
/// exponents without a `+` sign.
pub fn write(out: &mut String, v: &FieldValue) {
    match v {
        FieldValue::Null => out.push_str("null"),
        FieldValue::Bool(b) => out.push_str(&b.to_string()),
        FieldValue::Integer(i) => out.push_str(&i.to_string()),
        FieldValue::Decimal(d) => {
            let d = if *d == 0.0 { 0.0 } else { *d };
            out.push_str(&serde_json::to_string(&d).unwrap().replace("e+", "e"));
        }
        FieldValue::Text(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        FieldValue::List(l) => {
            out.push('[');
            for (i, x) in l.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write(out, x);
            }
            out.push(']');
        }
        FieldValue::Map(m) => {
            out.push('{');
            for (i, (k, x)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                write(out, x);
            }
            out.push('}');
        }
    }
}

/// Identity oracle: the id-less envelope through the writer above and the
/// reference hasher.
pub fn record_id(r: &MetaRecord) -> String {
    let text = |s: Option<&str>| s.map_or(FieldValue::Null, FieldValue::text);
    let mut source = BTreeMap::new();
    source.insert("provider".to_owned(), FieldValue::text(&r.source().provider));
    source.insert("raw_ref".to_owned(), text(r.source().raw_ref.map(|d| d.to_hex()).as_deref()));
    let mut env = BTreeMap::new();
    env.insert("created_at".to_owned(), FieldValue::text(r.created_at().to_string()));
    env.insert("fields".to_owned(), FieldValue::Map(r.fields().clone()));
    env.insert("schema_ref".to_owned(), text(r.schema_ref()));
    env.insert("source".to_owned(), FieldValue::Map(source));
    env.insert("structure_class".to_owned(), FieldValue::text(r.structure_class().as_str()));
    env.insert("sub_domain".to_owned(), FieldValue::text(r.sub_domain().as_str()));
    let mut out = String::new();
    write(&mut out, &FieldValue::Map(env));
    hex(&sha256(out.as_bytes()))
}
