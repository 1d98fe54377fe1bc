//! Schema validation and quality reports.
//!
//! Replay lives in [`crate::pipeline`] next to the stages it re-executes.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{canonical_json, Digest, FieldPath, FieldValue, MetaRecord, SubDomain, ValueKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequiredPath {
    pub path: FieldPath,
    pub kind: ValueKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeCheck {
    pub path: FieldPath,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Lt,
    Eq,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Lt => "<",
            Relation::Eq => "==",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            Relation::Le => ord != Ordering::Greater,
            Relation::Lt => ord == Ordering::Less,
            Relation::Eq => ord == Ordering::Equal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossFieldCheck {
    pub a: FieldPath,
    pub relation: Relation,
    pub b: FieldPath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConstraint {
    pub schema_ref: String,
    #[serde(default)]
    pub required_paths: Vec<RequiredPath>,
    #[serde(default)]
    pub range_checks: Vec<RangeCheck>,
    #[serde(default)]
    pub cross_field_checks: Vec<CrossFieldCheck>,
}

impl SchemaConstraint {
    pub fn check(&self) -> Result<(), String> {
        if self.schema_ref.is_empty() {
            return Err("empty schema_ref".into());
        }
        for r in &self.range_checks {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
                return Err(format!("bad range [{}, {}] at {}", r.min, r.max, r.path));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&canonical_json(self))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MissingRequired,
    WrongKind,
    OutOfRange,
    CrossField,
    Encoding,
}

impl IssueKind {
    pub const ALL: [IssueKind; 5] = [
        IssueKind::MissingRequired,
        IssueKind::WrongKind,
        IssueKind::OutOfRange,
        IssueKind::CrossField,
        IssueKind::Encoding,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub kind: IssueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<FieldPath>,
    pub message: String,
}

impl ValidationIssue {
    pub fn error(kind: IssueKind, path: Option<FieldPath>, message: impl Into<String>) -> Self {
        ValidationIssue {
            severity: Severity::Error,
            kind,
            path,
            message: message.into(),
        }
    }

    pub fn encoding(message: impl Into<String>) -> Self {
        Self::error(IssueKind::Encoding, None, message)
    }
}

/// Semantic checks are strict except for research data, which lands with
/// warnings.
fn semantic_severity(sd: SubDomain) -> Severity {
    match sd {
        SubDomain::Research => Severity::Warning,
        SubDomain::Hospital | SubDomain::Grower => Severity::Error,
    }
}

fn kind_matches(value: &FieldValue, expected: ValueKind) -> bool {
    let actual = value.kind();
    actual == expected || (expected == ValueKind::Decimal && actual == ValueKind::Integer)
}

fn compare(a: &FieldValue, b: &FieldValue) -> Option<Ordering> {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x.partial_cmp(&y),
        _ => match (a, b) {
            (FieldValue::Text(x), FieldValue::Text(y)) => Some(x.cmp(y)),
            (FieldValue::Bool(x), FieldValue::Bool(y)) => Some(x.cmp(y)),
            _ => None,
        },
    }
}

/// One issue per violated constraint, in constraint order.
pub fn validate(record: &MetaRecord, schema: &SchemaConstraint) -> Vec<ValidationIssue> {
    let semantic = semantic_severity(record.sub_domain());
    let mut issues = Vec::new();
    for req in &schema.required_paths {
        match record.get(&req.path) {
            None | Some(FieldValue::Null) => issues.push(ValidationIssue::error(
                IssueKind::MissingRequired,
                Some(req.path.clone()),
                format!("required {} is missing", req.path),
            )),
            Some(v) if !kind_matches(v, req.kind) => issues.push(ValidationIssue::error(
                IssueKind::WrongKind,
                Some(req.path.clone()),
                format!("{} is {}, expected {}", req.path, v.kind(), req.kind),
            )),
            Some(_) => {}
        }
    }
    for range in &schema.range_checks {
        let Some(v) = record.get(&range.path) else {
            continue;
        };
        match v.as_f64() {
            Some(x) if x < range.min || x > range.max => issues.push(ValidationIssue {
                severity: semantic,
                kind: IssueKind::OutOfRange,
                path: Some(range.path.clone()),
                message: format!("{} = {x} outside [{}, {}]", range.path, range.min, range.max),
            }),
            Some(_) => {}
            None if *v == FieldValue::Null => {}
            None => issues.push(ValidationIssue::error(
                IssueKind::WrongKind,
                Some(range.path.clone()),
                format!("{} is {}, expected a number", range.path, v.kind()),
            )),
        }
    }
    for cross in &schema.cross_field_checks {
        let (Some(a), Some(b)) = (record.get(&cross.a), record.get(&cross.b)) else {
            continue;
        };
        let ok = compare(a, b).is_some_and(|o| cross.relation.holds(o));
        if !ok {
            issues.push(ValidationIssue {
                severity: semantic,
                kind: IssueKind::CrossField,
                path: Some(cross.a.clone()),
                message: format!("expected {} {} {}", cross.a, cross.relation.symbol(), cross.b),
            });
        }
    }
    issues
}

/// Whether any issue blocks storing the record.
pub fn has_errors(issues: &[ValidationIssue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub dataset_id: String,
    pub record_count: u64,
    pub completeness: f64,
    pub issue_counts: BTreeMap<IssueKind, u64>,
}

/// Aggregates [`validate`] over `records`. Completeness is the share of
/// required paths that are filled; with no required paths it is 1.
pub fn summarize<'a>(
    dataset_id: &str,
    records: impl IntoIterator<Item = &'a MetaRecord>,
    schema: &SchemaConstraint,
) -> QualityReport {
    let mut issue_counts: BTreeMap<IssueKind, u64> = IssueKind::ALL.iter().map(|k| (*k, 0)).collect();
    let (mut count, mut filled, mut total) = (0u64, 0u64, 0u64);
    for r in records {
        count += 1;
        for req in &schema.required_paths {
            total += 1;
            if r.get(&req.path).is_some_and(|v| *v != FieldValue::Null) {
                filled += 1;
            }
        }
        for issue in validate(r, schema) {
            *issue_counts.entry(issue.kind).or_default() += 1;
        }
    }
    QualityReport {
        dataset_id: dataset_id.to_owned(),
        record_count: count,
        completeness: if total == 0 { 1.0 } else { filled as f64 / total as f64 },
        issue_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RecordDraft, SourceDescriptor, StructureClass, Timestamp};

    fn p(s: &str) -> FieldPath {
        FieldPath::parse(s).unwrap()
    }

    fn treatment_schema() -> SchemaConstraint {
        SchemaConstraint {
            schema_ref: "hospital/treatment".into(),
            required_paths: vec![RequiredPath {
                path: p("treatment.severity"),
                kind: ValueKind::Integer,
            }],
            range_checks: vec![RangeCheck {
                path: p("treatment.severity"),
                min: 0.0,
                max: 10.0,
            }],
            cross_field_checks: vec![],
        }
    }

    fn rec(sd: SubDomain, fields: Vec<(&str, FieldValue)>) -> MetaRecord {
        let mut d = RecordDraft::new(
            SourceDescriptor::new(format!("{}:x", sd.as_str()), None),
            sd,
            StructureClass::Structured,
            None,
            Timestamp::from_unix(0).unwrap(),
        );
        for (k, v) in fields {
            d = d.with_field(k, v);
        }
        d.seal().unwrap()
    }

    fn treatment(sev: i64) -> FieldValue {
        FieldValue::Map([("severity".to_owned(), FieldValue::Integer(sev))].into())
    }

    #[test]
    fn missing_required() {
        let issues = validate(&rec(SubDomain::Hospital, vec![]), &treatment_schema());
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].kind, IssueKind::MissingRequired);
        assert_eq!(issues[0].path.as_ref().unwrap().as_str(), "treatment.severity");
    }

    #[test]
    fn out_of_range_severity_depends_on_sub_domain() {
        let h = validate(&rec(SubDomain::Hospital, vec![("treatment", treatment(15))]), &treatment_schema());
        assert_eq!(h.len(), 1);
        assert_eq!((h[0].kind, h[0].severity), (IssueKind::OutOfRange, Severity::Error));
        let r = validate(&rec(SubDomain::Research, vec![("treatment", treatment(15))]), &treatment_schema());
        assert_eq!(r[0].severity, Severity::Warning);
        assert!(!has_errors(&r));
    }

    #[test]
    fn conforming_record_has_no_issues() {
        assert!(validate(&rec(SubDomain::Hospital, vec![("treatment", treatment(7))]), &treatment_schema()).is_empty());
    }

    #[test]
    fn cross_field_relations() {
        let schema = SchemaConstraint {
            schema_ref: "s".into(),
            required_paths: vec![],
            range_checks: vec![],
            cross_field_checks: vec![CrossFieldCheck {
                a: p("start"),
                relation: Relation::Le,
                b: p("end"),
            }],
        };
        let ok = rec(SubDomain::Hospital, vec![("start", "2024-01-01".into()), ("end", "2024-02-01".into())]);
        let bad = rec(SubDomain::Hospital, vec![("start", 5i64.into()), ("end", 4.5.into())]);
        assert!(validate(&ok, &schema).is_empty());
        assert_eq!(validate(&bad, &schema)[0].kind, IssueKind::CrossField);
    }

    #[test]
    fn completeness_half() {
        let rs = [
            rec(SubDomain::Hospital, vec![("treatment", treatment(3))]),
            rec(SubDomain::Hospital, vec![]),
        ];
        let report = summarize("d", rs.iter(), &treatment_schema());
        assert_eq!(report.completeness, 0.5);
        assert_eq!(report.issue_counts[&IssueKind::MissingRequired], 1);
        assert_eq!(report.record_count, 2);
    }

    #[test]
    fn decimal_accepts_integer() {
        assert!(kind_matches(&FieldValue::Integer(1), ValueKind::Decimal));
        assert!(!kind_matches(&FieldValue::Decimal(1.0), ValueKind::Integer));
    }
}
