use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{Digest, FieldTree, FieldValue, MetaRecord, RecordId};

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertedIndex {
    /// term -> (doc, term frequency), sorted by doc id.
    pub postings: BTreeMap<String, Vec<(RecordId, u32)>>,
    pub doc_lengths: BTreeMap<RecordId, u32>,
    pub doc_count: u64,
    pub built_at_snapshot: Digest,
}

#[derive(Debug, Default)]
pub struct IndexBuilder {
    postings: BTreeMap<String, BTreeMap<RecordId, u32>>,
    doc_lengths: BTreeMap<RecordId, u32>,
}

impl IndexBuilder {
    /// Adds a document's text leaves. A repeated id is ignored.
    pub fn add(&mut self, id: RecordId, fields: &FieldTree) {
        if self.doc_lengths.contains_key(&id) {
            return;
        }
        let mut len = 0u32;
        for value in fields.values() {
            value.for_each_text(&mut |s| {
                for tok in tokenize(s) {
                    len += 1;
                    *self.postings.entry(tok).or_default().entry(id).or_default() += 1;
                }
            });
        }
        self.doc_lengths.insert(id, len);
    }

    pub fn finish(self, snapshot: Digest) -> InvertedIndex {
        InvertedIndex {
            postings: self
                .postings
                .into_iter()
                .map(|(t, docs)| (t, docs.into_iter().collect()))
                .collect(),
            doc_count: self.doc_lengths.len() as u64,
            doc_lengths: self.doc_lengths,
            built_at_snapshot: snapshot,
        }
    }
}

/// Indexes every text leaf of `records`.
pub fn build_index<'a>(records: impl IntoIterator<Item = &'a MetaRecord>, snapshot: Digest) -> InvertedIndex {
    let mut b = IndexBuilder::default();
    for r in records {
        b.add(r.id(), r.fields());
    }
    b.finish(snapshot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: RecordId,
    pub score: f64,
}

impl InvertedIndex {
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + self.doc_count as f64 / (1.0 + df)).ln()
    }

    /// tf-idf over the distinct query tokens, best first, ties by id.
    pub fn search(&self, query: &str, limit: usize) -> Vec<SearchHit> {
        let terms: BTreeSet<String> = tokenize(query).collect();
        let mut scores: BTreeMap<RecordId, f64> = BTreeMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for (id, tf) in list {
                let len = self.doc_lengths[id] as f64;
                *scores.entry(*id).or_default() += (*tf as f64 / len) * idf;
            }
        }
        let mut hits: Vec<SearchHit> = scores.into_iter().map(|(id, score)| SearchHit { id, score }).collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.id.cmp(&b.id))
        });
        hits.truncate(limit);
        hits
    }
}

pub fn search(query: &str, index: &InvertedIndex, limit: usize) -> Vec<SearchHit> {
    index.search(query, limit)
}

/// Concatenated text leaves, for display.
pub fn text_of(fields: &FieldTree) -> String {
    let mut parts = Vec::new();
    FieldValue::Map(fields.clone()).for_each_text(&mut |s| parts.push(s.to_owned()));
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RecordDraft, SourceDescriptor, StructureClass, SubDomain, Timestamp};

    fn doc(text: &str) -> MetaRecord {
        RecordDraft::new(
            SourceDescriptor::new("research:x", None),
            SubDomain::Research,
            StructureClass::Unstructured,
            None,
            Timestamp::from_unix(0).unwrap(),
        )
        .with_field("body", text)
        .seal()
        .unwrap()
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("CBD-rich, THC:low!").collect::<Vec<_>>(), vec!["cbd", "rich", "thc", "low"]);
    }

    #[test]
    fn single_match() {
        let (a, b) = (doc("cbd oil"), doc("thc flower"));
        let idx = build_index([&a, &b], Digest::of(b""));
        assert_eq!(idx.postings["cbd"], vec![(a.id(), 1)]);
        let hits = idx.search("CBD", 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, a.id());
        assert!(idx.search("unknown", 10).is_empty());
    }

    #[test]
    fn empty_index() {
        let idx = build_index(std::iter::empty(), Digest::of(b""));
        assert_eq!(idx.doc_count, 0);
        assert!(idx.postings.is_empty());
    }

    #[test]
    fn frequency_ranks() {
        let (a, b, c) = (doc("pain pain pain x"), doc("pain x y z"), doc("other words here now"));
        let idx = build_index([&a, &b, &c], Digest::of(b""));
        let hits = idx.search("pain", 5);
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), vec![a.id(), b.id()]);
    }

    #[test]
    fn ties_break_by_id() {
        let (a, b) = (doc("same"), doc("same "));
        let idx = build_index([&a, &b], Digest::of(b""));
        let hits = idx.search("same", 5);
        assert!(hits[0].id < hits[1].id);
        assert_eq!(idx.search("same", 1).len(), 1);
    }
}
