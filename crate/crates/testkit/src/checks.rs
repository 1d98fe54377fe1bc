//! Criterion-level checks shared by the crate tests and the acceptance
//! target. Each returns the list of violations found; empty means pass.

use std::collections::BTreeSet;

use cdp_core::capture::RawDocument;
use cdp_core::config::Config;
use cdp_core::hospital::{anonymise, AnonymisePolicy};
use cdp_core::model::{canonical_parse, canonical_serialize, record_id, Digest, FieldPath, FieldValue, MetaRecord, RecordId};
use cdp_core::pipeline::IngestStatus;
use cdp_core::processing::build_index;
use cdp_core::strain::{self, StrainProfile};
use proptest::prelude::prop_assert_eq;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::Rng as _;

use crate::corpus::{mislabeled, patients, profiles, rows_delimited, rows_tree, search_corpus, search_query, strain_rows};
use crate::oracle;
use crate::sha::{hex, hmac_sha256};

pub const SEARCH_TOLERANCE: f64 = 1e-9;
pub const STRAIN_TOLERANCE: f64 = 1e-12;

/// 100 queries over five corpora of 1 to 1000 documents. The mid-sized
/// corpus repeats some documents to exercise deduplication.
pub fn search_oracle(seed: u64) -> Vec<String> {
    let mut rng = crate::rng(seed);
    let mut bad = Vec::new();
    let mut answered = 0;
    for (n, queries) in [(1, 20), (7, 20), (60, 20), (300, 20), (1000, 20)] {
        let mut docs = search_corpus(&mut rng, n);
        if n == 60 {
            docs.extend(docs[..5].to_vec());
        }
        let index = build_index(&docs, Digest::of(b"snapshot"));
        for _ in 0..queries {
            let q = search_query(&mut rng);
            let hits = index.search(&q, usize::MAX);
            let got: BTreeSet<RecordId> = hits.iter().map(|h| h.id).collect();
            if got.len() != hits.len() {
                bad.push(format!("n={n} {q:?}: repeated ids in results"));
            }
            if got != oracle::linear_match(&docs, &q) {
                bad.push(format!("n={n} {q:?}: membership differs from linear scan"));
            }
            let want = oracle::tfidf_scores(&docs, &q);
            if want.len() != hits.len() {
                bad.push(format!("n={n} {q:?}: {} scored, oracle {}", hits.len(), want.len()));
            }
            for h in &hits {
                match want.get(&h.id) {
                    Some(s) if (s - h.score).abs() <= SEARCH_TOLERANCE => {}
                    other => bad.push(format!("n={n} {q:?}: {} scored {} vs {other:?}", h.id, h.score)),
                }
            }
            for w in hits.windows(2) {
                let ordered = w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id);
                if !ordered {
                    bad.push(format!("n={n} {q:?}: {} ranked before {}", w[0].id, w[1].id));
                }
            }
            if index.search(&q, 5).as_slice() != &hits[..hits.len().min(5)] {
                bad.push(format!("n={n} {q:?}: limited result is not a prefix"));
            }
            if !hits.is_empty() {
                answered += 1;
            }
        }
    }
    // guard against a generator that never matches anything
    if answered < 50 {
        bad.push(format!("only {answered} of 100 queries matched any document"));
    }
    bad
}

/// Symmetry, self-similarity and range on `pairs` random pairs.
pub fn strain_similarity_properties(seed: u64, pairs: usize) -> Vec<String> {
    let mut rng = crate::rng(seed);
    let mut bad = Vec::new();
    for i in 0..pairs {
        let coarse = i % 4 == 0;
        let mut two = profiles(&mut rng, 2, 1, coarse);
        if i % 10 == 0 {
            // a scaled copy points the same way
            let c: f64 = rng.gen_range(0.01..100.0);
            two[1].features = two[0].features.iter().map(|x| x * c).collect();
        }
        let (a, b) = (&two[0], &two[1]);
        let ab = strain::similarity(a, b).unwrap();
        let ba = strain::similarity(b, a).unwrap();
        if (ab - ba).abs() > STRAIN_TOLERANCE {
            bad.push(format!("pair {i}: sim(a,b)={ab} sim(b,a)={ba}"));
        }
        for p in [a, b] {
            let s = strain::similarity(p, p).unwrap();
            if (s - 1.0).abs() > STRAIN_TOLERANCE {
                bad.push(format!("pair {i}: self similarity {s}"));
            }
        }
        if !(0.0..=1.0).contains(&ab) {
            bad.push(format!("pair {i}: similarity {ab} outside [0, 1]"));
        }
        if i % 10 == 0 && (ab - 1.0).abs() > STRAIN_TOLERANCE {
            bad.push(format!("pair {i}: scaled copy similarity {ab}"));
        }
    }
    bad
}

/// `nearest` and `name_consistency` against the brute-force oracles, on
/// corpora of 2 to 500 profiles with and without exact ties.
pub fn strain_oracles(seed: u64) -> Vec<String> {
    let mut rng = crate::rng(seed);
    let mut bad = Vec::new();
    for (n, coarse) in [(2, false), (10, true), (40, false), (100, true), (250, false), (500, true), (500, false)] {
        let corpus = profiles(&mut rng, n, (n / 3).max(1), coarse);
        let queries: Vec<&StrainProfile> = if n <= 100 {
            corpus.iter().collect()
        } else {
            (0..50).map(|_| &corpus[rng.gen_range(0..n)]).collect()
        };
        for q in queries {
            for k in [1, 5, n] {
                let got = strain::nearest(q, &corpus, k).unwrap();
                let want = oracle::nearest(q, &corpus, k);
                let same = got.len() == want.len()
                    && got
                        .iter()
                        .zip(&want)
                        .all(|(g, w)| g.sample_id == w.0 && (g.similarity - w.1).abs() <= STRAIN_TOLERANCE);
                if !same {
                    bad.push(format!("n={n} nearest({}, {k}) differs from brute force", q.sample_id));
                }
            }
        }
        let got = strain::name_consistency(&corpus).unwrap();
        let want = oracle::consistency(&corpus);
        let pairs: Vec<(String, String)> = got
            .inconsistent_pairs
            .iter()
            .map(|p| (p.sample_id.clone(), p.nearest_sample_id.clone()))
            .collect();
        if got.consistency_score != want.score
            || got.evaluated != want.evaluated
            || pairs != want.inconsistent
            || got.excluded_singletons != want.singletons
        {
            bad.push(format!("n={n}: name consistency differs from brute force"));
        }
    }
    bad
}

/// The mislabeled corpus must score 0.0 with every sample paired to its
/// differently named partner.
pub fn strain_mislabeled(m: usize) -> Vec<String> {
    let corpus = mislabeled(m);
    let r = strain::name_consistency(&corpus).unwrap();
    let mut bad = Vec::new();
    if r.consistency_score != 0.0 {
        bad.push(format!("score {}", r.consistency_score));
    }
    if r.evaluated != corpus.len() as u64 || r.inconsistent_pairs.len() != corpus.len() {
        bad.push(format!("{} evaluated, {} pairs for {} samples", r.evaluated, r.inconsistent_pairs.len(), corpus.len()));
    }
    for p in &r.inconsistent_pairs {
        let partner = match p.sample_id.strip_suffix("-0") {
            Some(stem) => format!("{stem}-1"),
            None => p.sample_id.replace("-1", "-0"),
        };
        if p.nearest_sample_id != partner || p.sample_name == p.nearest_name {
            bad.push(format!("{} paired with {}", p.sample_id, p.nearest_sample_id));
        }
    }
    bad
}

pub const IDENTIFIER_PATHS: &[&str] = &["profile.name", "profile.contact", "profile.dob", "username", "patient_id"];

/// Idempotence, pseudonym stability and identifier suppression over `n`
/// generated patient records.
pub fn anonymisation(seed: u64, n: usize, key: &[u8]) -> Vec<String> {
    let mut rng = crate::rng(seed);
    let policy = AnonymisePolicy::default();
    let people = patients(&mut rng, n, "Qx");
    let mut bad = Vec::new();
    let mut pseudonyms = BTreeSet::new();
    for p in &people {
        let id = p.record.id();
        let a = anonymise(&p.record, &policy, key).unwrap();
        if anonymise(&a, &policy, key).unwrap() != a {
            bad.push(format!("{id}: not idempotent"));
        }
        for path in IDENTIFIER_PATHS {
            if a.get(&FieldPath::parse(path).unwrap()).is_some() {
                bad.push(format!("{id}: {path} present"));
            }
        }
        let text = String::from_utf8(a.canonical_bytes()).unwrap();
        for ident in &p.identifiers {
            if text.contains(ident.as_str()) {
                bad.push(format!("{id}: {ident:?} in output"));
            }
        }
        let patient_id = p.record.text("patient_id").unwrap();
        let expected = hex(&hmac_sha256(key, patient_id.as_bytes()));
        let got = a.text("pseudonym").unwrap_or_default().to_owned();
        if got != expected {
            bad.push(format!("{id}: pseudonym {got} is not the keyed digest {expected}"));
        }
        pseudonyms.insert(got.clone());

        // a later record about the same patient gets the same pseudonym
        let mut later = p.record.draft().clone();
        later.fields.insert("condition".into(), FieldValue::text("follow-up"));
        later.fields.insert("severity".into(), FieldValue::Integer(3));
        let later: MetaRecord = later.seal().unwrap();
        let b = anonymise(&later, &policy, key).unwrap();
        if b.text("pseudonym") != Some(got.as_str()) {
            bad.push(format!("{id}: pseudonym changed between records of one patient"));
        }
        let other_key = anonymise(&p.record, &policy, b"a-different-key").unwrap();
        if other_key.text("pseudonym") == Some(got.as_str()) {
            bad.push(format!("{id}: pseudonym does not depend on the key"));
        }
    }
    if pseudonyms.len() != people.len() {
        bad.push(format!("{} distinct pseudonyms for {} patients", pseudonyms.len(), people.len()));
    }
    bad
}

/// `cases` arbitrary records through serialize/parse, with ids checked
/// against the independent writer and hasher.
pub fn round_trip(cases: u32) -> Vec<String> {
    let mut runner = TestRunner::new(ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let result = runner.run(&crate::arb::record(), |r| {
        let bytes = canonical_serialize(&r).unwrap();
        let back = canonical_parse(&bytes).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(canonical_serialize(&back).unwrap(), bytes.clone());
        prop_assert_eq!(record_id(&back).unwrap(), r.id());
        prop_assert_eq!(r.id().to_hex(), oracle::record_id(&r));
        Ok(())
    });
    match result {
        Ok(()) => Vec::new(),
        Err(e) => vec![e.to_string()],
    }
}

/// The same 50 rows as delimited and as tree text, through the two
/// configured strain specs. Returns the rows whose field trees differ.
pub fn heterogeneity(seed: u64) -> Vec<String> {
    let rows = strain_rows(&mut crate::rng(seed), 50);
    let config = Config::load(crate::repo_dir().join("config")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut p = crate::fixture::open(dir.path(), config).unwrap();
    let csv = RawDocument::new(rows_delimited(&rows), Some("rows.csv".into()), crate::t0(), "grower:farm-1");
    let json = RawDocument::new(rows_tree(&rows), Some("rows.json".into()), crate::t0(), "grower:farm-1");
    let a = p.ingest(&csv, Some("strain/profile")).unwrap();
    let b = p.ingest(&json, Some("strain/profile-json")).unwrap();
    if (a.status, b.status) != (IngestStatus::Stored, IngestStatus::Stored) || a.records_produced != 50 || b.records_produced != 50 {
        return vec![format!("delimited {:?} {}, tree {:?} {}", a.status, a.records_produced, b.status, b.records_produced)];
    }
    let fields = |id: &RecordId| p.store().record(id).unwrap().fields().clone();
    a.record_ids
        .iter()
        .zip(&b.record_ids)
        .zip(&rows)
        .filter(|((x, y), _)| fields(x) != fields(y))
        .map(|(_, row)| format!("{}: field trees differ", row.sample_id))
        .collect()
}
