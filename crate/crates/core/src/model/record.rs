use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::digest::{Digest, RawId, RecordId};
use super::json;
use super::path::FieldPath;
use super::value::{check_field_name, tree_get, FieldTree, FieldValue};
use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubDomain {
    Hospital,
    Grower,
    Research,
}

impl SubDomain {
    pub const ALL: [SubDomain; 3] = [SubDomain::Hospital, SubDomain::Grower, SubDomain::Research];

    pub fn as_str(&self) -> &'static str {
        match self {
            SubDomain::Hospital => "hospital",
            SubDomain::Grower => "grower",
            SubDomain::Research => "research",
        }
    }
}

impl FromStr for SubDomain {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hospital" => Ok(SubDomain::Hospital),
            "grower" => Ok(SubDomain::Grower),
            "research" => Ok(SubDomain::Research),
            _ => Err(ModelError::InvariantViolation(format!("unknown sub-domain {s:?}"))),
        }
    }
}

impl fmt::Display for SubDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureClass {
    Structured,
    SemiStructured,
    Unstructured,
}

impl StructureClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StructureClass::Structured => "structured",
            StructureClass::SemiStructured => "semi_structured",
            StructureClass::Unstructured => "unstructured",
        }
    }
}

impl FromStr for StructureClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" => Ok(StructureClass::Structured),
            "semi_structured" => Ok(StructureClass::SemiStructured),
            "unstructured" => Ok(StructureClass::Unstructured),
            _ => Err(ModelError::InvariantViolation(format!(
                "unknown structure class {s:?}"
            ))),
        }
    }
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// UTC instant with second precision, rendered `YYYY-MM-DDTHH:MM:SSZ`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp(i64);

impl Timestamp {
    pub fn from_unix(secs: i64) -> Result<Self, ModelError> {
        Utc.timestamp_opt(secs, 0)
            .single()
            .map(|_| Timestamp(secs))
            .ok_or_else(|| ModelError::InvariantViolation(format!("timestamp {secs} out of range")))
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Timestamp(dt.timestamp())
    }

    pub fn unix(&self) -> i64 {
        self.0
    }

    pub fn to_datetime(&self) -> DateTime<Utc> {
        Utc.timestamp_opt(self.0, 0).single().expect("validated at construction")
    }

    pub fn plus_seconds(&self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    /// Accepts RFC 3339 with a UTC offset (`Z` or `+00:00`) and no
    /// fractional seconds.
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let dt = DateTime::parse_from_rfc3339(s)
            .map_err(|e| ModelError::InvariantViolation(format!("bad timestamp {s:?}: {e}")))?;
        if dt.offset().local_minus_utc() != 0 {
            return Err(ModelError::InvariantViolation(format!(
                "timestamp {s:?} is not UTC"
            )));
        }
        if dt.timestamp_subsec_nanos() != 0 {
            return Err(ModelError::InvariantViolation(format!(
                "timestamp {s:?} has sub-second precision"
            )));
        }
        Ok(Timestamp(dt.timestamp()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_datetime().to_rfc3339_opts(SecondsFormat::Secs, true))
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Timestamp({self})")
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Where a record came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceDescriptor {
    /// `<sub-domain>:<name>`, e.g. `grower:farm-12`.
    pub provider: String,
    pub raw_ref: Option<RawId>,
}

impl SourceDescriptor {
    pub fn new(provider: impl Into<String>, raw_ref: Option<RawId>) -> Self {
        SourceDescriptor {
            provider: provider.into(),
            raw_ref,
        }
    }

    pub fn sub_domain(&self) -> Option<SubDomain> {
        self.provider.split_once(':').and_then(|(p, _)| p.parse().ok())
    }
}

pub fn check_provider(provider: &str) -> Result<(), ModelError> {
    let ok = match provider.split_once(':') {
        Some((sd, name)) => {
            sd.parse::<SubDomain>().is_ok()
                && !name.is_empty()
                && !name.chars().any(|c| c.is_whitespace() || c.is_control())
        }
        None => false,
    };
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvariantViolation(format!(
            "provider {provider:?} does not match <sub-domain>:<name>"
        )))
    }
}

/// The mutable form of a record, before its identity is computed.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordDraft {
    pub source: SourceDescriptor,
    pub sub_domain: SubDomain,
    pub structure_class: StructureClass,
    pub schema_ref: Option<String>,
    pub created_at: Timestamp,
    pub fields: FieldTree,
}

impl RecordDraft {
    pub fn new(
        source: SourceDescriptor,
        sub_domain: SubDomain,
        structure_class: StructureClass,
        schema_ref: Option<String>,
        created_at: Timestamp,
    ) -> Self {
        RecordDraft {
            source,
            sub_domain,
            structure_class,
            schema_ref,
            created_at,
            fields: FieldTree::new(),
        }
    }

    pub fn with_field(mut self, name: &str, value: impl Into<FieldValue>) -> Self {
        self.fields.insert(name.to_owned(), value.into());
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_provider(&self.source.provider)?;
        for (name, value) in &self.fields {
            check_field_name(name)?;
            value.check(name, true)?;
        }
        Ok(())
    }

    /// Normalizes text to NFC, checks invariants, and assigns the content id.
    pub fn seal(self) -> Result<MetaRecord, ModelError> {
        self.validate()?;
        let fields = match FieldValue::Map(self.fields).nfc() {
            FieldValue::Map(m) => m,
            _ => unreachable!(),
        };
        let draft = RecordDraft {
            fields,
            schema_ref: self.schema_ref.map(|s| super::value::nfc(&s)),
            source: SourceDescriptor {
                provider: super::value::nfc(&self.source.provider),
                raw_ref: self.source.raw_ref,
            },
            ..self
        };
        let id = Digest::of(&envelope_bytes(&draft, None));
        Ok(MetaRecord { id, draft })
    }
}

/// A sealed canonical record. Immutable; edits go through [`MetaRecord::into_draft`].
#[derive(Clone, Debug, PartialEq)]
pub struct MetaRecord {
    id: RecordId,
    draft: RecordDraft,
}

impl MetaRecord {
    pub fn id(&self) -> RecordId {
        self.id
    }

    pub fn source(&self) -> &SourceDescriptor {
        &self.draft.source
    }

    pub fn sub_domain(&self) -> SubDomain {
        self.draft.sub_domain
    }

    pub fn structure_class(&self) -> StructureClass {
        self.draft.structure_class
    }

    pub fn schema_ref(&self) -> Option<&str> {
        self.draft.schema_ref.as_deref()
    }

    pub fn created_at(&self) -> Timestamp {
        self.draft.created_at
    }

    pub fn fields(&self) -> &FieldTree {
        &self.draft.fields
    }

    pub fn draft(&self) -> &RecordDraft {
        &self.draft
    }

    pub fn into_draft(self) -> RecordDraft {
        self.draft
    }

    pub fn get(&self, path: &FieldPath) -> Option<&FieldValue> {
        tree_get(&self.draft.fields, path)
    }

    /// Text at `path`, if present and textual.
    pub fn text(&self, path: &str) -> Option<&str> {
        FieldPath::parse(path).ok().and_then(|p| self.get(&p)).and_then(FieldValue::as_text)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        envelope_bytes(&self.draft, Some(self.id))
    }
}

fn envelope_bytes(d: &RecordDraft, id: Option<RecordId>) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    out.extend_from_slice(b"{\"created_at\":");
    json::write_str(&mut out, &d.created_at.to_string());
    out.extend_from_slice(b",\"fields\":");
    json::write_map(&mut out, &d.fields);
    if let Some(id) = id {
        out.extend_from_slice(b",\"id\":");
        json::write_str(&mut out, &id.to_hex());
    }
    out.extend_from_slice(b",\"schema_ref\":");
    match &d.schema_ref {
        Some(s) => json::write_str(&mut out, s),
        None => out.extend_from_slice(b"null"),
    }
    out.extend_from_slice(b",\"source\":{\"provider\":");
    json::write_str(&mut out, &d.source.provider);
    out.extend_from_slice(b",\"raw_ref\":");
    match &d.source.raw_ref {
        Some(r) => json::write_str(&mut out, &r.to_hex()),
        None => out.extend_from_slice(b"null"),
    }
    out.extend_from_slice(b"},\"structure_class\":");
    json::write_str(&mut out, d.structure_class.as_str());
    out.extend_from_slice(b",\"sub_domain\":");
    json::write_str(&mut out, d.sub_domain.as_str());
    out.push(b'}');
    out
}

/// Deterministic byte form of a record.
pub fn canonical_serialize(record: &MetaRecord) -> Result<Vec<u8>, ModelError> {
    record.draft.validate()?;
    Ok(record.canonical_bytes())
}

/// Content id of a record: digest of its canonical form without `id`.
pub fn record_id(record: &MetaRecord) -> Result<RecordId, ModelError> {
    record.draft.validate()?;
    Ok(Digest::of(&envelope_bytes(&record.draft, None)))
}

pub fn canonical_parse(data: &[u8]) -> Result<MetaRecord, ModelError> {
    let root = json::parse(data, true)?;
    let FieldValue::Map(mut env) = root else {
        return Err(invariant("record must be an object"));
    };
    let mut take = |key: &str| env.remove(key);
    let created_at = match take("created_at") {
        Some(FieldValue::Text(s)) => Timestamp::parse(&s)?,
        _ => return Err(invariant("created_at must be a timestamp string")),
    };
    let fields = match take("fields") {
        Some(FieldValue::Map(m)) => m,
        _ => return Err(invariant("fields must be an object")),
    };
    let id = match take("id") {
        Some(FieldValue::Text(s)) => Digest::parse(&s)
            .map_err(|e| invariant(&format!("id: {e}")))?,
        _ => return Err(invariant("id must be a digest string")),
    };
    let schema_ref = match take("schema_ref") {
        Some(FieldValue::Text(s)) => Some(s),
        Some(FieldValue::Null) => None,
        _ => return Err(invariant("schema_ref must be a string or null")),
    };
    let source = match take("source") {
        Some(FieldValue::Map(mut s)) => {
            let provider = match s.remove("provider") {
                Some(FieldValue::Text(p)) => p,
                _ => return Err(invariant("source.provider must be a string")),
            };
            let raw_ref = match s.remove("raw_ref") {
                Some(FieldValue::Text(r)) => {
                    Some(Digest::parse(&r).map_err(|e| invariant(&format!("raw_ref: {e}")))?)
                }
                Some(FieldValue::Null) => None,
                _ => return Err(invariant("source.raw_ref must be a string or null")),
            };
            if let Some(k) = s.keys().next() {
                return Err(invariant(&format!("unknown source key {k:?}")));
            }
            SourceDescriptor { provider, raw_ref }
        }
        _ => return Err(invariant("source must be an object")),
    };
    let structure_class = match take("structure_class") {
        Some(FieldValue::Text(s)) => s.parse()?,
        _ => return Err(invariant("structure_class must be a string")),
    };
    let sub_domain = match take("sub_domain") {
        Some(FieldValue::Text(s)) => s.parse()?,
        _ => return Err(invariant("sub_domain must be a string")),
    };
    if let Some(k) = env.keys().next() {
        return Err(invariant(&format!("unknown envelope key {k:?}")));
    }
    let record = RecordDraft {
        source,
        sub_domain,
        structure_class,
        schema_ref,
        created_at,
        fields,
    }
    .seal()?;
    if record.id != id {
        return Err(invariant(&format!(
            "id {id} does not match content digest {}",
            record.id
        )));
    }
    Ok(record)
}

fn invariant(msg: &str) -> ModelError {
    ModelError::InvariantViolation(msg.to_owned())
}

/// Looks up a dotted path; absent on missing paths, error only on bad syntax.
pub fn field_get<'a>(record: &'a MetaRecord, path: &str) -> Result<Option<&'a FieldValue>, ModelError> {
    let path = FieldPath::parse(path)?;
    Ok(record.get(&path))
}

impl Serialize for MetaRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let d = &self.draft;
        let mut map = serializer.serialize_map(Some(7))?;
        map.serialize_entry("created_at", &d.created_at)?;
        map.serialize_entry("fields", &FieldMapRef(&d.fields))?;
        map.serialize_entry("id", &self.id)?;
        map.serialize_entry("schema_ref", &d.schema_ref)?;
        map.serialize_entry("source", &d.source)?;
        map.serialize_entry("structure_class", &d.structure_class)?;
        map.serialize_entry("sub_domain", &d.sub_domain)?;
        map.end()
    }
}

struct FieldMapRef<'a>(&'a BTreeMap<String, FieldValue>);

impl Serialize for FieldMapRef<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draft() -> RecordDraft {
        RecordDraft::new(
            SourceDescriptor::new("grower:farm-12", None),
            SubDomain::Grower,
            StructureClass::Structured,
            Some("strain/profile".into()),
            Timestamp::parse("2024-05-01T10:00:00Z").unwrap(),
        )
    }

    #[test]
    fn key_order_independent() {
        let a = draft().with_field("b", 2i64).with_field("a", 1i64).seal().unwrap();
        let b = draft().with_field("a", 1i64).with_field("b", 2i64).seal().unwrap();
        assert_eq!(canonical_serialize(&a).unwrap(), canonical_serialize(&b).unwrap());
    }

    #[test]
    fn empty_record_round_trip() {
        let r = draft().seal().unwrap();
        let bytes = canonical_serialize(&r).unwrap();
        assert_eq!(canonical_parse(&bytes).unwrap(), r);
        assert!(bytes.starts_with(br#"{"created_at":"2024-05-01T10:00:00Z","fields":{},"id":""#));
    }

    #[test]
    fn truncated_input_is_parse_error() {
        let bytes = canonical_serialize(&draft().seal().unwrap()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            canonical_parse(cut),
            Err(ModelError::Parse { offset, .. }) if offset == cut.len()
        ));
    }

    #[test]
    fn nan_is_invariant_violation() {
        let r = draft().with_field("x", 1.5f64).seal().unwrap();
        let text = String::from_utf8(canonical_serialize(&r).unwrap()).unwrap();
        let tampered = text.replace("1.5", "NaN");
        assert!(matches!(
            canonical_parse(tampered.as_bytes()),
            Err(ModelError::InvariantViolation(_))
        ));
    }

    #[test]
    fn mismatched_id_is_rejected() {
        let r = draft().with_field("x", 1i64).seal().unwrap();
        let text = String::from_utf8(canonical_serialize(&r).unwrap()).unwrap();
        let tampered = text.replace("\"x\":1", "\"x\":2");
        assert!(matches!(
            canonical_parse(tampered.as_bytes()),
            Err(ModelError::InvariantViolation(_))
        ));
    }

    #[test]
    fn field_name_rules() {
        assert!(draft().with_field("a.b", 1i64).seal().is_err());
        assert!(draft().with_field("", 1i64).seal().is_err());
        let nested = FieldValue::Map([("x.y".to_owned(), FieldValue::Null)].into());
        assert!(draft().with_field("m", nested).seal().is_err());
    }

    #[test]
    fn provider_pattern() {
        assert!(check_provider("hospital:stvincents").is_ok());
        assert!(check_provider("lab:x").is_err());
        assert!(check_provider("research:").is_err());
        assert!(check_provider("research").is_err());
    }

    #[test]
    fn field_get_lookups() {
        let treatment = FieldValue::Map([("severity".to_owned(), FieldValue::Integer(7))].into());
        let doses = FieldValue::List(vec![FieldValue::Decimal(2.5), FieldValue::Decimal(5.0)]);
        let r = draft()
            .with_field("treatment", treatment)
            .with_field("doses", doses)
            .seal()
            .unwrap();
        assert_eq!(field_get(&r, "treatment.severity").unwrap(), Some(&FieldValue::Integer(7)));
        assert_eq!(field_get(&r, "does.not.exist").unwrap(), None);
        assert_eq!(field_get(&r, "doses.0").unwrap(), Some(&FieldValue::Decimal(2.5)));
        assert_eq!(field_get(&r, "doses.7").unwrap(), None);
        assert!(field_get(&r, "a..b").is_err());
    }

    #[test]
    fn timestamps_must_be_whole_utc_seconds() {
        assert!(Timestamp::parse("2024-05-01T10:00:00+00:00").is_ok());
        assert!(Timestamp::parse("2024-05-01T10:00:00+02:00").is_err());
        assert!(Timestamp::parse("2024-05-01T10:00:00.5Z").is_err());
        assert!(Timestamp::parse("yesterday").is_err());
    }

    #[test]
    fn serde_form_matches_canonical_bytes() {
        let r = draft()
            .with_field("name", "Caf\u{0065}\u{0301}")
            .with_field("thc", 12.0f64)
            .with_field("n", -4i64)
            .seal()
            .unwrap();
        assert_eq!(serde_json::to_vec(&r).unwrap(), r.canonical_bytes());
    }
}
