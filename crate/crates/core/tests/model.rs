use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use cdp_core::model::{
    canonical_parse, canonical_serialize, field_get, record_id, Digest, FieldTree, FieldValue, MetaRecord, RecordDraft,
    SourceDescriptor, StructureClass, SubDomain, Timestamp,
};
use cdp_testkit::oracle;
use cdp_testkit::sha::{hex, sha256};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

#[test]
fn thousand_records_round_trip_with_stable_ids() {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let start = Instant::now();
    runner
        .run(&cdp_testkit::arb::record(), |r| {
            let bytes = canonical_serialize(&r).unwrap();
            let back = canonical_parse(&bytes).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(canonical_serialize(&back).unwrap(), bytes.clone());
            prop_assert_eq!(record_id(&back).unwrap(), r.id());
            prop_assert_eq!(r.id().to_hex(), oracle::record_id(&r));
            Ok(())
        })
        .unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
}

fn fixture(fields: FieldTree, schema: Option<&str>) -> MetaRecord {
    let mut d = RecordDraft::new(
        SourceDescriptor::new("grower:farm-1", None),
        SubDomain::Grower,
        StructureClass::Structured,
        schema.map(str::to_owned),
        Timestamp::parse(if fields.is_empty() { "2024-01-01T00:00:00Z" } else { "2024-03-05T12:30:00Z" }).unwrap(),
    );
    d.fields = fields;
    d.seal().unwrap()
}

// Golden ids below were computed outside Rust (Python hashlib over
// json.dumps(sort_keys=True, separators=(",", ":"), ensure_ascii=False)).
#[test]
fn golden_ids() {
    let empty = fixture(FieldTree::new(), None);
    assert_eq!(empty.id().to_hex(), "1dfd24d1535d4efdf55e93005c6c6d8426dc5463d210012487833953f078fa1a");

    let mut features = BTreeMap::new();
    features.insert("thc".to_owned(), FieldValue::Decimal(19.4));
    features.insert("cbd".to_owned(), FieldValue::Decimal(0.5));
    let mut fields = FieldTree::new();
    // decomposed é: sealing normalizes to NFC before hashing
    fields.insert("strain_name".into(), FieldValue::text("Cafe\u{301} Kush"));
    fields.insert("features".into(), FieldValue::Map(features));
    fields.insert("count".into(), FieldValue::Integer(3));
    fields.insert(
        "tags".into(),
        FieldValue::List(vec![FieldValue::text("a"), FieldValue::Bool(true), FieldValue::Null]),
    );
    let r = fixture(fields, Some("strain/profile"));
    assert_eq!(r.id().to_hex(), "2c645a87667d47b69894f3e1a5a8ad69008e8381a8d25c60c15362fb8ddddb3e");
}

#[test]
fn reference_hasher_matches_known_vectors() {
    assert_eq!(hex(&sha256(b"")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    assert_eq!(hex(&sha256(b"abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    let long = vec![b'a'; 1000];
    assert_eq!(hex(&sha256(&long)), hex(Digest::of(&long).as_bytes()));
}

#[test]
fn identity_tracks_every_envelope_field() {
    let base = fixture(FieldTree::new(), None);
    let variants = [
        RecordDraft { schema_ref: Some("x/y".into()), ..base.draft().clone() },
        RecordDraft { sub_domain: SubDomain::Research, ..base.draft().clone() },
        RecordDraft { structure_class: StructureClass::SemiStructured, ..base.draft().clone() },
        RecordDraft { created_at: base.created_at().plus_seconds(1), ..base.draft().clone() },
        RecordDraft { source: SourceDescriptor::new("grower:farm-2", None), ..base.draft().clone() },
        base.draft().clone().with_field("a", 1i64),
    ];
    for v in variants {
        assert_ne!(v.seal().unwrap().id(), base.id());
    }
    assert_eq!(base.draft().clone().seal().unwrap().id(), base.id());
}

#[test]
fn field_get_examples() {
    let mut treatment = BTreeMap::new();
    treatment.insert("severity".to_owned(), FieldValue::Integer(7));
    let mut fields = FieldTree::new();
    fields.insert("treatment".into(), FieldValue::Map(treatment));
    fields.insert("doses".into(), FieldValue::List(vec![FieldValue::Integer(5), FieldValue::Integer(10)]));
    let r = fixture(fields, None);
    assert_eq!(field_get(&r, "treatment.severity").unwrap(), Some(&FieldValue::Integer(7)));
    assert_eq!(field_get(&r, "does.not.exist").unwrap(), None);
    assert_eq!(field_get(&r, "doses.0").unwrap(), Some(&FieldValue::Integer(5)));
    assert_eq!(field_get(&r, "doses.9").unwrap(), None);
    assert!(field_get(&r, "a..b").is_err());
    assert!(field_get(&r, "").is_err());
}
