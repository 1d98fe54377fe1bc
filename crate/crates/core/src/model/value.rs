use std::collections::BTreeMap;
use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use super::path::{FieldPath, Segment};
use super::ModelError;

/// Named top-level fields of a record.
pub type FieldTree = BTreeMap<String, FieldValue>;

/// The value model of the meta-format.
///
/// Maps are ordered by key code point, which is also the canonical
/// serialization order.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldValue {
    Null,
    Bool(bool),
    Integer(i64),
    /// Always finite once it has passed validation.
    Decimal(f64),
    Text(String),
    List(Vec<FieldValue>),
    Map(BTreeMap<String, FieldValue>),
}

impl FieldValue {
    pub fn text(s: impl Into<String>) -> Self {
        FieldValue::Text(s.into())
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            FieldValue::Null => ValueKind::Null,
            FieldValue::Bool(_) => ValueKind::Boolean,
            FieldValue::Integer(_) => ValueKind::Integer,
            FieldValue::Decimal(_) => ValueKind::Decimal,
            FieldValue::Text(_) => ValueKind::Text,
            FieldValue::List(_) => ValueKind::List,
            FieldValue::Map(_) => ValueKind::Map,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<String, FieldValue>> {
        match self {
            FieldValue::Map(m) => Some(m),
            _ => None,
        }
    }

    /// Numeric view of integers and decimals.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FieldValue::Integer(i) => Some(*i as f64),
            FieldValue::Decimal(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            FieldValue::Integer(i) => Some(*i),
            _ => None,
        }
    }

    /// Recursively checks the value invariants: finite decimals and, when
    /// `field_names` is set, map keys that are valid field names.
    pub fn check(&self, at: &str, field_names: bool) -> Result<(), ModelError> {
        match self {
            FieldValue::Decimal(d) if !d.is_finite() => Err(ModelError::InvariantViolation(
                format!("non-finite decimal at {at:?}"),
            )),
            FieldValue::List(items) => {
                for (i, item) in items.iter().enumerate() {
                    item.check(&format!("{at}.{i}"), field_names)?;
                }
                Ok(())
            }
            FieldValue::Map(map) => {
                for (k, v) in map {
                    if field_names {
                        check_field_name(k)?;
                    }
                    v.check(&join(at, k), field_names)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Returns the value with every text and key in Unicode NFC.
    pub fn nfc(self) -> Self {
        match self {
            FieldValue::Text(s) => FieldValue::Text(nfc(&s)),
            FieldValue::List(items) => FieldValue::List(items.into_iter().map(Self::nfc).collect()),
            FieldValue::Map(map) => {
                FieldValue::Map(map.into_iter().map(|(k, v)| (nfc(&k), v.nfc())).collect())
            }
            other => other,
        }
    }

    pub fn get(&self, path: &FieldPath) -> Option<&FieldValue> {
        let mut cur = self;
        for seg in path.segments() {
            cur = cur.child(seg)?;
        }
        Some(cur)
    }

    fn child(&self, seg: &Segment) -> Option<&FieldValue> {
        match self {
            FieldValue::Map(m) => m.get(seg.as_str()),
            FieldValue::List(items) => seg.index().and_then(|i| items.get(i)),
            _ => None,
        }
    }

    fn child_mut(&mut self, seg: &Segment) -> Option<&mut FieldValue> {
        match self {
            FieldValue::Map(m) => m.get_mut(seg.as_str()),
            FieldValue::List(items) => seg.index().and_then(move |i| items.get_mut(i)),
            _ => None,
        }
    }

    /// Visits every text leaf in depth-first key order.
    pub fn for_each_text<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            FieldValue::Text(s) => f(s),
            FieldValue::List(items) => items.iter().for_each(|v| v.for_each_text(f)),
            FieldValue::Map(m) => m.values().for_each(|v| v.for_each_text(f)),
            _ => {}
        }
    }
}

pub(crate) fn nfc(s: &str) -> String {
    if unicode_normalization::is_nfc_quick(s.chars()) == unicode_normalization::IsNormalized::Yes {
        s.to_owned()
    } else {
        s.nfc().collect()
    }
}

fn join(at: &str, k: &str) -> String {
    if at.is_empty() {
        k.to_owned()
    } else {
        format!("{at}.{k}")
    }
}

pub fn check_field_name(name: &str) -> Result<(), ModelError> {
    if name.is_empty() {
        return Err(ModelError::InvariantViolation("empty field name".into()));
    }
    if name.contains('.') {
        return Err(ModelError::InvariantViolation(format!(
            "field name {name:?} contains '.'"
        )));
    }
    Ok(())
}

/// Looks up a path in a field tree.
pub fn tree_get<'a>(tree: &'a FieldTree, path: &FieldPath) -> Option<&'a FieldValue> {
    let mut segs = path.segments().iter();
    let first = segs.next()?;
    let mut cur = tree.get(first.as_str())?;
    for seg in segs {
        cur = cur.child(seg)?;
    }
    Some(cur)
}

/// Writes `value` at `path`, creating intermediate maps. Fails when an
/// intermediate value is a scalar or a list index is out of range.
pub fn tree_set(
    tree: &mut FieldTree,
    path: &FieldPath,
    value: FieldValue,
) -> Result<Option<FieldValue>, ModelError> {
    let segs = path.segments();
    if segs.len() == 1 {
        return Ok(tree.insert(segs[0].as_str().to_owned(), value));
    }
    let mut cur = tree
        .entry(segs[0].as_str().to_owned())
        .or_insert_with(|| FieldValue::Map(BTreeMap::new()));
    for seg in &segs[1..segs.len() - 1] {
        cur = match cur {
            FieldValue::Map(m) => m
                .entry(seg.as_str().to_owned())
                .or_insert_with(|| FieldValue::Map(BTreeMap::new())),
            FieldValue::List(items) => seg
                .index()
                .and_then(|i| items.get_mut(i))
                .ok_or_else(|| ModelError::PathSyntax(format!("cannot descend into {path}")))?,
            _ => return Err(ModelError::PathSyntax(format!("cannot descend into {path}"))),
        };
    }
    let last = &segs[segs.len() - 1];
    match cur {
        FieldValue::Map(m) => Ok(m.insert(last.as_str().to_owned(), value)),
        FieldValue::List(items) => match last.index().and_then(|i| items.get_mut(i)) {
            Some(slot) => Ok(Some(std::mem::replace(slot, value))),
            None => Err(ModelError::PathSyntax(format!("index out of range in {path}"))),
        },
        _ => Err(ModelError::PathSyntax(format!("cannot descend into {path}"))),
    }
}

/// Removes the value at `path` (map entries only), returning it.
pub fn tree_remove(tree: &mut FieldTree, path: &FieldPath) -> Option<FieldValue> {
    let segs = path.segments();
    if segs.len() == 1 {
        return tree.remove(segs[0].as_str());
    }
    let mut cur = tree.get_mut(segs[0].as_str())?;
    for seg in &segs[1..segs.len() - 1] {
        cur = cur.child_mut(seg)?;
    }
    match cur {
        FieldValue::Map(m) => m.remove(segs[segs.len() - 1].as_str()),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Null,
    Boolean,
    Integer,
    Decimal,
    Text,
    List,
    Map,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Null => "null",
            ValueKind::Boolean => "boolean",
            ValueKind::Integer => "integer",
            ValueKind::Decimal => "decimal",
            ValueKind::Text => "text",
            ValueKind::List => "list",
            ValueKind::Map => "map",
        };
        f.write_str(s)
    }
}

impl Serialize for FieldValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FieldValue::Null => serializer.serialize_unit(),
            FieldValue::Bool(b) => serializer.serialize_bool(*b),
            FieldValue::Integer(i) => serializer.serialize_i64(*i),
            FieldValue::Decimal(d) => {
                // -0.0 and 0.0 compare equal, so they share one rendering.
                let d = if *d == 0.0 { 0.0 } else { *d };
                serializer.serialize_f64(d)
            }
            FieldValue::Text(s) => serializer.serialize_str(&nfc(s)),
            FieldValue::List(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            FieldValue::Map(m) => {
                let mut map = serializer.serialize_map(Some(m.len()))?;
                for (k, v) in m {
                    map.serialize_entry(&nfc(k), v)?;
                }
                map.end()
            }
        }
    }
}

/// Mirrors the canonical parser: JSON integers are integers, numbers with a
/// fraction or exponent are decimals.
impl<'de> Deserialize<'de> for FieldValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FieldValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a field value")
            }
            fn visit_unit<E>(self) -> Result<FieldValue, E> {
                Ok(FieldValue::Null)
            }
            fn visit_none<E>(self) -> Result<FieldValue, E> {
                Ok(FieldValue::Null)
            }
            fn visit_bool<E>(self, b: bool) -> Result<FieldValue, E> {
                Ok(FieldValue::Bool(b))
            }
            fn visit_i64<E>(self, i: i64) -> Result<FieldValue, E> {
                Ok(FieldValue::Integer(i))
            }
            fn visit_u64<E: de::Error>(self, u: u64) -> Result<FieldValue, E> {
                i64::try_from(u)
                    .map(FieldValue::Integer)
                    .map_err(|_| E::custom("integer out of range"))
            }
            fn visit_f64<E: de::Error>(self, d: f64) -> Result<FieldValue, E> {
                if d.is_finite() {
                    Ok(FieldValue::Decimal(d))
                } else {
                    Err(E::custom("non-finite decimal"))
                }
            }
            fn visit_str<E>(self, s: &str) -> Result<FieldValue, E> {
                Ok(FieldValue::Text(s.to_owned()))
            }
            fn visit_string<E>(self, s: String) -> Result<FieldValue, E> {
                Ok(FieldValue::Text(s))
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<FieldValue, A::Error> {
                let mut items = Vec::new();
                while let Some(v) = seq.next_element()? {
                    items.push(v);
                }
                Ok(FieldValue::List(items))
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<FieldValue, A::Error> {
                let mut m = BTreeMap::new();
                while let Some((k, v)) = map.next_entry::<String, FieldValue>()? {
                    if m.insert(k, v).is_some() {
                        return Err(de::Error::custom("duplicate key"));
                    }
                }
                Ok(FieldValue::Map(m))
            }
        }
        deserializer.deserialize_any(V)
    }
}

impl From<&str> for FieldValue {
    fn from(s: &str) -> Self {
        FieldValue::Text(s.to_owned())
    }
}

impl From<String> for FieldValue {
    fn from(s: String) -> Self {
        FieldValue::Text(s)
    }
}

impl From<i64> for FieldValue {
    fn from(i: i64) -> Self {
        FieldValue::Integer(i)
    }
}

impl From<f64> for FieldValue {
    fn from(d: f64) -> Self {
        FieldValue::Decimal(d)
    }
}

impl From<bool> for FieldValue {
    fn from(b: bool) -> Self {
        FieldValue::Bool(b)
    }
}
