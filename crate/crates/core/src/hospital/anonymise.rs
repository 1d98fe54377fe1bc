use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::model::{canonical_json, tree_get, tree_remove, tree_set, Digest, FieldPath, FieldValue, MetaRecord, SubDomain};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("anonymisation policy: {0}")]
pub struct PolicyError(pub String);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudonymRule {
    pub path: FieldPath,
    pub into: FieldPath,
}

/// What [`anonymise`] suppresses, pseudonymizes and generalizes.
///
/// `remove` entries are field paths; a trailing `.*` names the whole
/// subtree, which is the same as removing the path itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnonymisePolicy {
    pub remove: Vec<String>,
    pub pseudonymize: Vec<PseudonymRule>,
    pub generalize_year: Vec<FieldPath>,
}

impl Default for AnonymisePolicy {
    fn default() -> Self {
        let p = |s: &str| FieldPath::parse(s).expect("static path");
        AnonymisePolicy {
            remove: vec!["profile.name".into(), "profile.contact.*".into(), "username".into()],
            pseudonymize: vec![PseudonymRule {
                path: p("patient_id"),
                into: p("pseudonym"),
            }],
            generalize_year: vec![p("profile.dob")],
        }
    }
}

impl AnonymisePolicy {
    pub fn digest(&self) -> Digest {
        Digest::of(&canonical_json(self))
    }

    pub fn removal_paths(&self) -> Result<Vec<FieldPath>, PolicyError> {
        self.remove
            .iter()
            .map(|r| {
                FieldPath::parse(r.strip_suffix(".*").unwrap_or(r)).map_err(|e| PolicyError(format!("{r:?}: {e}")))
            })
            .collect()
    }

    pub fn check(&self) -> Result<(), PolicyError> {
        self.removal_paths()?;
        for g in &self.generalize_year {
            g.sibling(&format!("{}_year", g.last())).map_err(|e| PolicyError(e.to_string()))?;
        }
        Ok(())
    }
}

/// Keyed digest of an identifier: HMAC-SHA256, lowercase hex.
pub fn pseudonym(key: &[u8], value: &str) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC takes any key length");
    mac.update(value.as_bytes());
    Digest::from_bytes(mac.finalize().into_bytes().into()).to_hex()
}

fn identifier_text(v: &FieldValue) -> Option<String> {
    match v {
        FieldValue::Text(s) => Some(s.clone()),
        FieldValue::Integer(i) => Some(i.to_string()),
        _ => None,
    }
}

fn year_of(v: &FieldValue) -> Option<i64> {
    let s = v.as_text()?;
    let digits = s.get(..4)?;
    if digits.bytes().all(|b| b.is_ascii_digit()) && s.as_bytes().get(4).is_none_or(|&b| b == b'-') {
        digits.parse().ok()
    } else {
        None
    }
}

/// Suppresses direct identifiers, replaces pseudonymized paths with their
/// keyed digest and reduces dates to years. Idempotent.
pub fn anonymise(record: &MetaRecord, policy: &AnonymisePolicy, key: &[u8]) -> Result<MetaRecord, PolicyError> {
    if record.sub_domain() != SubDomain::Hospital {
        return Err(PolicyError(format!("record {} is not a hospital record", record.id())));
    }
    let mut fields = record.fields().clone();
    let mut changed = false;
    for path in policy.removal_paths()? {
        changed |= tree_remove(&mut fields, &path).is_some();
    }
    for rule in &policy.pseudonymize {
        if let Some(v) = tree_remove(&mut fields, &rule.path) {
            changed = true;
            if let Some(id) = identifier_text(&v) {
                tree_set(&mut fields, &rule.into, FieldValue::Text(pseudonym(key, &id)))
                    .map_err(|e| PolicyError(e.to_string()))?;
            }
        }
    }
    for path in &policy.generalize_year {
        let Some(v) = tree_get(&fields, path).cloned() else {
            continue;
        };
        changed = true;
        tree_remove(&mut fields, path);
        if let Some(year) = year_of(&v) {
            let target = path.sibling(&format!("{}_year", path.last())).map_err(|e| PolicyError(e.to_string()))?;
            tree_set(&mut fields, &target, FieldValue::Integer(year)).map_err(|e| PolicyError(e.to_string()))?;
        }
    }
    if !changed {
        return Ok(record.clone());
    }
    let mut draft = record.draft().clone();
    draft.fields = fields;
    draft.seal().map_err(|e| PolicyError(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RecordDraft, SourceDescriptor, StructureClass, Timestamp};

    fn patient(id: &str) -> MetaRecord {
        let profile = FieldValue::Map(
            [
                ("name".to_owned(), FieldValue::text("Jane Roe")),
                (
                    "contact".to_owned(),
                    FieldValue::Map([("phone".to_owned(), FieldValue::text("0400 000 000"))].into()),
                ),
                ("dob".to_owned(), FieldValue::text("1984-03-12")),
                ("condition".to_owned(), FieldValue::text("chronic pain")),
            ]
            .into(),
        );
        RecordDraft::new(
            SourceDescriptor::new("hospital:test", None),
            SubDomain::Hospital,
            StructureClass::Structured,
            Some("hospital/user".into()),
            Timestamp::from_unix(0).unwrap(),
        )
        .with_field("patient_id", id)
        .with_field("username", "jroe")
        .with_field("profile", profile)
        .seal()
        .unwrap()
    }

    #[test]
    fn strips_identifiers() {
        let out = anonymise(&patient("u1"), &AnonymisePolicy::default(), b"k").unwrap();
        let get = |p: &str| out.get(&FieldPath::parse(p).unwrap()).cloned();
        assert_eq!(get("profile.name"), None);
        assert_eq!(get("profile.contact"), None);
        assert_eq!(get("username"), None);
        assert_eq!(get("patient_id"), None);
        assert_eq!(get("profile.dob"), None);
        assert_eq!(get("profile.dob_year"), Some(FieldValue::Integer(1984)));
        assert_eq!(get("profile.condition"), Some(FieldValue::text("chronic pain")));
        assert_eq!(get("pseudonym"), Some(FieldValue::Text(pseudonym(b"k", "u1"))));
    }

    #[test]
    fn idempotent_and_stable() {
        let policy = AnonymisePolicy::default();
        let once = anonymise(&patient("u1"), &policy, b"k").unwrap();
        assert_eq!(anonymise(&once, &policy, b"k").unwrap(), once);
        assert_ne!(pseudonym(b"k", "u1"), pseudonym(b"k", "u2"));
        assert_ne!(pseudonym(b"k", "u1"), pseudonym(b"other", "u1"));
    }

    #[test]
    fn malformed_policy() {
        let mut policy = AnonymisePolicy::default();
        policy.remove.push("a..b".into());
        assert!(anonymise(&patient("u1"), &policy, b"k").is_err());
    }
}
