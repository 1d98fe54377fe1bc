use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{tree_get, tree_remove, tree_set, FieldPath, FieldValue, MetaRecord};
use crate::store::Pattern;

use super::RuleError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CleaningKind {
    DropField {
        path: FieldPath,
    },
    /// `pattern` must capture the numeric part in group 1. The unit goes
    /// to the sibling field `<name>_unit`.
    UnitNormalize {
        path: FieldPath,
        pattern: String,
        target_unit: String,
    },
    TrimText {
        path: FieldPath,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningRule {
    pub rule_id: String,
    pub kind: CleaningKind,
    /// Matched against the record's schema_ref (empty when it has none).
    pub applies_to: Pattern,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub rule_id: String,
    pub path: FieldPath,
    pub before: Option<FieldValue>,
    pub after: Option<FieldValue>,
}

/// Cleaning rules with their patterns compiled.
#[derive(Debug)]
pub struct Cleaner<'a> {
    rules: Vec<(&'a CleaningRule, Option<Regex>)>,
}

impl<'a> Cleaner<'a> {
    pub fn new(rules: &'a [CleaningRule]) -> Result<Self, RuleError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let re = match &rule.kind {
                CleaningKind::UnitNormalize { pattern, .. } => {
                    let re = Regex::new(pattern).map_err(|e| RuleError::new(&rule.rule_id, e.to_string()))?;
                    if re.captures_len() < 2 {
                        return Err(RuleError::new(&rule.rule_id, "pattern has no capture group"));
                    }
                    Some(re)
                }
                _ => None,
            };
            compiled.push((rule, re));
        }
        Ok(Cleaner { rules: compiled })
    }

    pub fn clean(&self, record: &MetaRecord) -> Result<(MetaRecord, Vec<Change>), RuleError> {
        let schema = record.schema_ref().unwrap_or("");
        let mut fields = record.fields().clone();
        let mut log = Vec::new();
        for (rule, re) in &self.rules {
            if !rule.applies_to.matches(schema) {
                continue;
            }
            let id = &rule.rule_id;
            let change = |path: &FieldPath, before, after| Change {
                rule_id: id.clone(),
                path: path.clone(),
                before,
                after,
            };
            match &rule.kind {
                CleaningKind::DropField { path } => {
                    if let Some(old) = tree_remove(&mut fields, path) {
                        log.push(change(path, Some(old), None));
                    }
                }
                CleaningKind::TrimText { path } => {
                    if let Some(FieldValue::Text(s)) = tree_get(&fields, path) {
                        let trimmed = s.trim();
                        if trimmed.len() != s.len() {
                            let (old, new) = (FieldValue::text(s.as_str()), FieldValue::text(trimmed));
                            set(&mut fields, path, new.clone(), id)?;
                            log.push(change(path, Some(old), Some(new)));
                        }
                    }
                }
                CleaningKind::UnitNormalize {
                    path, target_unit, ..
                } => {
                    let re = re.as_ref().expect("compiled");
                    let Some(FieldValue::Text(s)) = tree_get(&fields, path) else {
                        continue;
                    };
                    let Some(n) = re
                        .captures(s)
                        .and_then(|c| c.get(1))
                        .and_then(|m| m.as_str().parse::<f64>().ok())
                        .filter(|n| n.is_finite())
                    else {
                        continue;
                    };
                    let old = FieldValue::text(s.as_str());
                    let unit_path = path
                        .sibling(&format!("{}_unit", path.last()))
                        .map_err(|e| RuleError::new(id, e.to_string()))?;
                    set(&mut fields, path, FieldValue::Decimal(n), id)?;
                    log.push(change(path, Some(old), Some(FieldValue::Decimal(n))));
                    let unit = FieldValue::text(target_unit.as_str());
                    let prev = set(&mut fields, &unit_path, unit.clone(), id)?;
                    if prev.as_ref() != Some(&unit) {
                        log.push(change(&unit_path, prev, Some(unit)));
                    }
                }
            }
        }
        if log.is_empty() {
            return Ok((record.clone(), log));
        }
        let mut draft = record.draft().clone();
        draft.fields = fields;
        let out = draft.seal().map_err(|e| RuleError::new("seal", e.to_string()))?;
        Ok((out, log))
    }
}

fn set(
    fields: &mut crate::model::FieldTree,
    path: &FieldPath,
    value: FieldValue,
    rule_id: &str,
) -> Result<Option<FieldValue>, RuleError> {
    tree_set(fields, path, value).map_err(|e| RuleError::new(rule_id, e.to_string()))
}

/// Applies `rules` in order. A record no rule touches comes back unchanged
/// with an empty log.
pub fn clean(record: &MetaRecord, rules: &[CleaningRule]) -> Result<(MetaRecord, Vec<Change>), RuleError> {
    Cleaner::new(rules)?.clean(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RecordDraft, SourceDescriptor, StructureClass, SubDomain, Timestamp};

    fn p(s: &str) -> FieldPath {
        FieldPath::parse(s).unwrap()
    }

    fn rec(fields: Vec<(&str, FieldValue)>) -> MetaRecord {
        let mut d = RecordDraft::new(
            SourceDescriptor::new("hospital:x", None),
            SubDomain::Hospital,
            StructureClass::Structured,
            Some("hospital/treatment".into()),
            Timestamp::from_unix(0).unwrap(),
        );
        for (k, v) in fields {
            d = d.with_field(k, v);
        }
        d.seal().unwrap()
    }

    fn rule(id: &str, kind: CleaningKind) -> CleaningRule {
        CleaningRule {
            rule_id: id.into(),
            kind,
            applies_to: Pattern::new("*"),
        }
    }

    #[test]
    fn drop_field_logs_removed_value() {
        let r = rec(vec![("internal_notes", "x".into()), ("keep", 1i64.into())]);
        let (out, log) = clean(&r, &[rule("d", CleaningKind::DropField { path: p("internal_notes") })]).unwrap();
        assert!(out.get(&p("internal_notes")).is_none());
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].before, Some(FieldValue::text("x")));
        assert_ne!(out.id(), r.id());
    }

    #[test]
    fn unit_normalize() {
        let r = rec(vec![("dose", "250 mg".into())]);
        let (out, log) = clean(
            &r,
            &[rule(
                "u",
                CleaningKind::UnitNormalize {
                    path: p("dose"),
                    pattern: r"^(\d+(\.\d+)?) ?mg$".into(),
                    target_unit: "mg".into(),
                },
            )],
        )
        .unwrap();
        assert_eq!(out.get(&p("dose")), Some(&FieldValue::Decimal(250.0)));
        assert_eq!(out.get(&p("dose_unit")), Some(&FieldValue::text("mg")));
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn untouched_record_is_identical() {
        let r = rec(vec![("a", " x ".into())]);
        let (out, log) = clean(&r, &[rule("t", CleaningKind::TrimText { path: p("b") })]).unwrap();
        assert_eq!(out, r);
        assert!(log.is_empty());
    }

    #[test]
    fn applies_to_filters_by_schema() {
        let r = rec(vec![("a", " x ".into())]);
        let mut t = rule("t", CleaningKind::TrimText { path: p("a") });
        t.applies_to = Pattern::new("research/*");
        assert!(clean(&r, &[t]).unwrap().1.is_empty());
    }

    #[test]
    fn bad_pattern_is_rule_error() {
        let err = clean(
            &rec(vec![]),
            &[rule(
                "bad",
                CleaningKind::UnitNormalize {
                    path: p("d"),
                    pattern: "(".into(),
                    target_unit: "mg".into(),
                },
            )],
        )
        .unwrap_err();
        assert_eq!(err.rule_id, "bad");
    }
}
