//! Declarative source-to-record field mapping.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{
    canonical_json, tree_set, Digest, FieldPath, FieldTree, FieldValue, MetaRecord,
    RecordDraft, SourceDescriptor, StructureClass, SubDomain,
};

use super::delimited::Row;
use super::{CaptureError, RawDocument};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Delimited,
    Tree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coercion {
    None,
    ToInteger,
    ToDecimal,
    ToBoolean,
    TrimText,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingRule {
    /// Column name for delimited input, field path for tree input.
    pub source_path: String,
    pub target_path: FieldPath,
    pub coercion: Coercion,
    pub required: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSpec {
    pub spec_id: String,
    pub source_format: SourceFormat,
    pub rules: Vec<MappingRule>,
    pub target_sub_domain: SubDomain,
    pub schema_ref: String,
    /// Where the logical units live inside a tree document. A list there
    /// yields one record per element. Defaults to the document root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_path: Option<FieldPath>,
}

impl MappingSpec {
    pub fn validate(&self) -> Result<(), CaptureError> {
        if self.spec_id.is_empty() {
            return Err(CaptureError::InvalidSpec("empty spec_id".into()));
        }
        let mut targets = BTreeSet::new();
        for rule in &self.rules {
            if !targets.insert(rule.target_path.as_str()) {
                return Err(CaptureError::InvalidSpec(format!(
                    "duplicate target path {}",
                    rule.target_path
                )));
            }
        }
        for a in &targets {
            for b in &targets {
                if b.len() > a.len() && b.starts_with(a) && b.as_bytes()[a.len()] == b'.' {
                    return Err(CaptureError::InvalidSpec(format!(
                        "target path {a} is a prefix of {b}"
                    )));
                }
            }
        }
        if self.source_format == SourceFormat::Tree {
            for rule in &self.rules {
                FieldPath::parse(&rule.source_path)
                    .map_err(|e| CaptureError::InvalidSpec(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical_json(self)
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }
}

/// One logical unit of source data.
#[derive(Clone, Copy, Debug)]
pub enum MappingInput<'a> {
    Row(&'a Row),
    Tree(&'a FieldValue),
}

impl MappingInput<'_> {
    /// Empty delimited cells and JSON nulls count as absent.
    fn lookup(&self, source: &str) -> Option<FieldValue> {
        match self {
            MappingInput::Row(row) => row
                .get(source)
                .filter(|s| !s.is_empty())
                .map(|s| FieldValue::Text(s.clone())),
            MappingInput::Tree(tree) => {
                let path = FieldPath::parse(source).ok()?;
                tree.get(&path).filter(|v| **v != FieldValue::Null).cloned()
            }
        }
    }
}

/// Builds a record from one unit: copies every rule's source value to its
/// target with the coercion applied and fills the envelope from the spec
/// and document.
pub fn apply_mapping(
    input: MappingInput<'_>,
    spec: &MappingSpec,
    doc: &RawDocument,
    structure_class: StructureClass,
) -> Result<MetaRecord, CaptureError> {
    let missing: Vec<String> = spec
        .rules
        .iter()
        .filter(|r| r.required && input.lookup(&r.source_path).is_none())
        .map(|r| r.source_path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CaptureError::Mapping { missing });
    }
    let mut fields = FieldTree::new();
    for rule in &spec.rules {
        let Some(value) = input.lookup(&rule.source_path) else {
            continue;
        };
        let coerced = coerce(&value, rule.coercion).ok_or_else(|| CaptureError::Coercion {
            path: rule.source_path.clone(),
            value: render(&value),
        })?;
        tree_set(&mut fields, &rule.target_path, coerced)
            .map_err(|e| CaptureError::InvalidSpec(e.to_string()))?;
    }
    let draft = RecordDraft {
        source: SourceDescriptor::new(doc.provider.clone(), Some(doc.raw_id)),
        sub_domain: spec.target_sub_domain,
        structure_class,
        schema_ref: Some(spec.schema_ref.clone()),
        created_at: doc.received_at,
        fields,
    };
    draft.seal().map_err(CaptureError::Model)
}

fn render(v: &FieldValue) -> String {
    match v {
        FieldValue::Text(s) => s.clone(),
        other => String::from_utf8(canonical_json(other)).unwrap_or_default(),
    }
}

pub fn coerce(value: &FieldValue, coercion: Coercion) -> Option<FieldValue> {
    match coercion {
        Coercion::None => Some(value.clone()),
        Coercion::TrimText => value.as_text().map(|s| FieldValue::text(s.trim())),
        Coercion::ToInteger => match value {
            FieldValue::Integer(i) => Some(FieldValue::Integer(*i)),
            FieldValue::Decimal(d) if d.fract() == 0.0 && d.abs() < 9.0e15 => {
                Some(FieldValue::Integer(*d as i64))
            }
            FieldValue::Text(s) => s.trim().parse::<i64>().ok().map(FieldValue::Integer),
            _ => None,
        },
        Coercion::ToDecimal => match value {
            FieldValue::Integer(i) => Some(FieldValue::Decimal(*i as f64)),
            FieldValue::Decimal(d) => Some(FieldValue::Decimal(*d)),
            FieldValue::Text(s) => s
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|d| d.is_finite())
                .map(FieldValue::Decimal),
            _ => None,
        },
        Coercion::ToBoolean => match value {
            FieldValue::Bool(b) => Some(FieldValue::Bool(*b)),
            FieldValue::Integer(0) => Some(FieldValue::Bool(false)),
            FieldValue::Integer(1) => Some(FieldValue::Bool(true)),
            FieldValue::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "true" | "yes" | "y" | "1" => Some(FieldValue::Bool(true)),
                "false" | "no" | "n" | "0" => Some(FieldValue::Bool(false)),
                _ => None,
            },
            _ => None,
        },
    }
}

/// Logical units of a tree document: the value at `record_path` (or the
/// root); a list yields one unit per element.
pub fn tree_units<'a>(root: &'a FieldValue, record_path: Option<&FieldPath>) -> Vec<&'a FieldValue> {
    let at = match record_path {
        Some(p) => match root.get(p) {
            Some(v) => v,
            None => return Vec::new(),
        },
        None => root,
    };
    match at {
        FieldValue::List(items) => items.iter().collect(),
        other => vec![other],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Timestamp;

    fn doc() -> RawDocument {
        RawDocument::new(
            b"THC%\n12.5".to_vec(),
            Some("s.csv".into()),
            Timestamp::from_unix(1_700_000_000).unwrap(),
            "grower:farm-12",
        )
    }

    fn spec(rules: Vec<MappingRule>) -> MappingSpec {
        MappingSpec {
            spec_id: "strain/profile".into(),
            source_format: SourceFormat::Delimited,
            rules,
            target_sub_domain: SubDomain::Grower,
            schema_ref: "strain/profile".into(),
            record_path: None,
        }
    }

    fn rule(src: &str, dst: &str, coercion: Coercion, required: bool) -> MappingRule {
        MappingRule {
            source_path: src.into(),
            target_path: FieldPath::parse(dst).unwrap(),
            coercion,
            required,
        }
    }

    #[test]
    fn decimal_coercion() {
        let row: Row = [("THC%".to_owned(), "12.5".to_owned())].into();
        let s = spec(vec![rule("THC%", "cannabinoids.thc_pct", Coercion::ToDecimal, true)]);
        let r = apply_mapping(MappingInput::Row(&row), &s, &doc(), StructureClass::Structured).unwrap();
        assert_eq!(r.text("cannabinoids.thc_pct"), None);
        assert_eq!(
            crate::model::field_get(&r, "cannabinoids.thc_pct").unwrap(),
            Some(&FieldValue::Decimal(12.5))
        );
        assert_eq!(r.source().raw_ref, Some(doc().raw_id));
        assert_eq!(r.created_at(), doc().received_at);
    }

    #[test]
    fn missing_required_lists_every_path() {
        let row: Row = [("other".to_owned(), "x".to_owned())].into();
        let s = spec(vec![
            rule("THC%", "thc", Coercion::ToDecimal, true),
            rule("CBD%", "cbd", Coercion::ToDecimal, true),
            rule("note", "note", Coercion::None, false),
        ]);
        match apply_mapping(MappingInput::Row(&row), &s, &doc(), StructureClass::Structured) {
            Err(CaptureError::Mapping { missing }) => assert_eq!(missing, vec!["THC%", "CBD%"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coercion_failure_names_value() {
        let row: Row = [("THC%".to_owned(), "twelve".to_owned())].into();
        let s = spec(vec![rule("THC%", "thc", Coercion::ToDecimal, true)]);
        assert!(matches!(
            apply_mapping(MappingInput::Row(&row), &s, &doc(), StructureClass::Structured),
            Err(CaptureError::Coercion { path, value }) if path == "THC%" && value == "twelve"
        ));
    }

    #[test]
    fn identity_mapping_preserves_tree() {
        let tree = crate::model::json::parse(br#"{"a":{"b":1,"c":[true,"x"]},"d":2.5}"#, false).unwrap();
        let mut s = spec(vec![
            rule("a.b", "a.b", Coercion::None, true),
            rule("a.c", "a.c", Coercion::None, true),
            rule("d", "d", Coercion::None, true),
        ]);
        s.source_format = SourceFormat::Tree;
        let r = apply_mapping(MappingInput::Tree(&tree), &s, &doc(), StructureClass::SemiStructured).unwrap();
        assert_eq!(FieldValue::Map(r.fields().clone()), tree);
    }

    #[test]
    fn spec_rejects_duplicate_or_nested_targets() {
        let s = spec(vec![rule("x", "a", Coercion::None, false), rule("y", "a", Coercion::None, false)]);
        assert!(s.validate().is_err());
        let s = spec(vec![rule("x", "a", Coercion::None, false), rule("y", "a.b", Coercion::None, false)]);
        assert!(s.validate().is_err());
        let s = spec(vec![rule("x", "ab", Coercion::None, false), rule("y", "a.b", Coercion::None, false)]);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn coercions() {
        assert_eq!(coerce(&"  7 ".into(), Coercion::ToInteger), Some(FieldValue::Integer(7)));
        assert_eq!(coerce(&FieldValue::Decimal(3.0), Coercion::ToInteger), Some(FieldValue::Integer(3)));
        assert_eq!(coerce(&FieldValue::Decimal(3.5), Coercion::ToInteger), None);
        assert_eq!(coerce(&"Yes".into(), Coercion::ToBoolean), Some(FieldValue::Bool(true)));
        assert_eq!(coerce(&"inf".into(), Coercion::ToDecimal), None);
        assert_eq!(coerce(&FieldValue::Integer(1), Coercion::TrimText), None);
        assert_eq!(coerce(&" a ".into(), Coercion::TrimText), Some("a".into()));
    }

    #[test]
    fn spec_digest_is_stable() {
        let s = spec(vec![rule("THC%", "thc", Coercion::ToDecimal, true)]);
        assert_eq!(s.digest(), s.clone().digest());
        let text = String::from_utf8(s.canonical_bytes()).unwrap();
        assert!(!text.contains("record_path"));
        let back: MappingSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
