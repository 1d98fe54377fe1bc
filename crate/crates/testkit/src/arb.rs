//! proptest strategies for arbitrary records.

use cdp_core::model::{Digest, FieldValue, MetaRecord, RecordDraft, SourceDescriptor, StructureClass, SubDomain, Timestamp};
use proptest::prelude::*;

fn value() -> impl Strategy<Value = FieldValue> {
    let leaf = prop_oneof![
        Just(FieldValue::Null),
        any::<bool>().prop_map(FieldValue::Bool),
        any::<i64>().prop_map(FieldValue::Integer),
        any::<f64>().prop_filter("finite", |d| d.is_finite()).prop_map(FieldValue::Decimal),
        any::<String>().prop_map(FieldValue::Text),
        "[a-zA-Z0-9 ,;\"\\\\\n\t]{0,12}".prop_map(FieldValue::Text),
    ];
    leaf.prop_recursive(3, 24, 5, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(FieldValue::List),
            prop::collection::btree_map(key(), inner, 0..5).prop_map(FieldValue::Map),
        ]
    })
}

fn key() -> impl Strategy<Value = String> {
    prop_oneof!["[a-z_][a-z0-9_]{0,8}", "[^.]{1,6}"]
}

pub fn record() -> impl Strategy<Value = MetaRecord> {
    let sub = prop_oneof![Just(SubDomain::Hospital), Just(SubDomain::Grower), Just(SubDomain::Research)];
    let class = prop_oneof![
        Just(StructureClass::Structured),
        Just(StructureClass::SemiStructured),
        Just(StructureClass::Unstructured)
    ];
    (
        sub,
        class,
        "[a-z0-9-]{1,10}",
        prop::option::of(any::<[u8; 32]>()),
        prop::option::of("[a-z]{1,8}/[a-z-]{1,10}"),
        0i64..4_102_444_800,
        prop::collection::btree_map(key(), value(), 0..8),
    )
        .prop_map(|(sub, class, name, raw, schema, secs, fields)| {
            let source = SourceDescriptor::new(format!("{}:{name}", sub.as_str()), raw.map(Digest::from_bytes));
            let mut d = RecordDraft::new(source, sub, class, schema, Timestamp::from_unix(secs).unwrap());
            d.fields = fields;
            d.seal().unwrap()
        })
}
