use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{FieldPath, FieldValue, MetaRecord};

use super::RuleError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Contains,
    Equals,
    Lt,
    Gt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub path: FieldPath,
    pub operator: Operator,
    pub literal: FieldValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryRule {
    pub rule_id: String,
    pub condition: Condition,
    pub tag: String,
}

impl CategoryRule {
    pub fn check(&self) -> Result<(), RuleError> {
        let kebab = !self.tag.is_empty()
            && self
                .tag
                .split('-')
                .all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()));
        if kebab {
            Ok(())
        } else {
            Err(RuleError::new(&self.rule_id, format!("tag {:?} is not lowercase kebab-case", self.tag)))
        }
    }

    /// Whether the record satisfies the condition. An absent path never does.
    pub fn holds(&self, record: &MetaRecord) -> Result<bool, RuleError> {
        let Some(value) = record.get(&self.condition.path) else {
            return Ok(false);
        };
        let lit = &self.condition.literal;
        let mismatch = || {
            RuleError::new(
                &self.rule_id,
                format!(
                    "{:?} cannot compare {} with {}",
                    self.condition.operator,
                    value.kind(),
                    lit.kind()
                ),
            )
        };
        match self.condition.operator {
            Operator::Contains => match (value, lit) {
                (FieldValue::Text(s), FieldValue::Text(needle)) => Ok(s.contains(needle.as_str())),
                (FieldValue::List(items), _) => Ok(items.iter().any(|v| equal(v, lit))),
                (FieldValue::Null, _) => Ok(false),
                _ => Err(mismatch()),
            },
            Operator::Equals => Ok(equal(value, lit)),
            Operator::Lt | Operator::Gt => {
                if *value == FieldValue::Null {
                    return Ok(false);
                }
                let (a, b) = value.as_f64().zip(lit.as_f64()).ok_or_else(mismatch)?;
                Ok(if self.condition.operator == Operator::Lt { a < b } else { a > b })
            }
        }
    }
}

fn equal(a: &FieldValue, b: &FieldValue) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

/// Tags of all satisfied rules, deduplicated and sorted.
pub fn categorize(record: &MetaRecord, rules: &[CategoryRule]) -> Result<Vec<String>, RuleError> {
    let mut tags = BTreeSet::new();
    for rule in rules {
        rule.check()?;
        if rule.holds(record)? {
            tags.insert(rule.tag.clone());
        }
    }
    Ok(tags.into_iter().collect())
}

/// Stores `tags` under the top-level field "tags", re-identifying the record.
pub fn apply_tags(record: &MetaRecord, tags: &[String]) -> Result<MetaRecord, RuleError> {
    let mut draft = record.draft().clone();
    draft.fields.insert(
        "tags".to_owned(),
        FieldValue::List(tags.iter().map(|t| FieldValue::text(t.as_str())).collect()),
    );
    draft.seal().map_err(|e| RuleError::new("tags", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RecordDraft, SourceDescriptor, StructureClass, SubDomain, Timestamp};

    fn rec(fields: Vec<(&str, FieldValue)>) -> MetaRecord {
        let mut d = RecordDraft::new(
            SourceDescriptor::new("hospital:x", None),
            SubDomain::Hospital,
            StructureClass::Structured,
            None,
            Timestamp::from_unix(0).unwrap(),
        );
        for (k, v) in fields {
            d = d.with_field(k, v);
        }
        d.seal().unwrap()
    }

    fn rule(id: &str, path: &str, op: Operator, lit: FieldValue, tag: &str) -> CategoryRule {
        CategoryRule {
            rule_id: id.into(),
            condition: Condition {
                path: FieldPath::parse(path).unwrap(),
                operator: op,
                literal: lit,
            },
            tag: tag.into(),
        }
    }

    #[test]
    fn contains_tags() {
        let r = rec(vec![("condition", "chronic pain".into())]);
        let rules = [rule("r1", "condition", Operator::Contains, "pain".into(), "chronic-pain")];
        assert_eq!(categorize(&r, &rules).unwrap(), vec!["chronic-pain"]);
        assert!(categorize(&r, &[]).unwrap().is_empty());
    }

    #[test]
    fn duplicate_tags_collapse() {
        let r = rec(vec![("thc", 20.5.into())]);
        let rules = [
            rule("a", "thc", Operator::Gt, 15i64.into(), "high-thc"),
            rule("b", "thc", Operator::Equals, 20.5.into(), "high-thc"),
            rule("c", "thc", Operator::Lt, 1i64.into(), "low-thc"),
        ];
        assert_eq!(categorize(&r, &rules).unwrap(), vec!["high-thc"]);
    }

    #[test]
    fn lt_on_text_is_rule_error() {
        let r = rec(vec![("name", "OG".into())]);
        let err = categorize(&r, &[rule("bad", "name", Operator::Lt, 3i64.into(), "x")]).unwrap_err();
        assert_eq!(err.rule_id, "bad");
    }

    #[test]
    fn tag_must_be_kebab() {
        let r = rec(vec![]);
        assert!(categorize(&r, &[rule("t", "a", Operator::Equals, 1i64.into(), "Bad Tag")]).is_err());
        assert!(categorize(&r, &[rule("t", "a", Operator::Equals, 1i64.into(), "a--b")]).is_err());
    }
}
