//! Hospital sub-domain: users, forms, assignments, treatments, cases,
//! subscriptions and alerts.
//!
//! Every workflow object is a versioned MetaRecord (`entity_id`, `version`
//! plus the object's fields) under a fixed `hospital/<kind>` schema_ref.
//! The current state of an object is its highest version; [`HospitalState`]
//! folds the typed zone into that view. Operations that change state live
//! on [`crate::Platform`].

mod anonymise;
mod password;

pub use anonymise::{anonymise, pseudonym, AnonymisePolicy, PolicyError, PseudonymRule};
pub use password::{hash_password, verify_password};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::model::{
    json, FieldPath, FieldTree, FieldValue, MetaRecord, ModelError, RecordDraft, SourceDescriptor, StructureClass,
    SubDomain, Timestamp, ValueKind,
};
use crate::quality::{RangeCheck, RequiredPath, SchemaConstraint};

pub const PROVIDER: &str = "hospital:cdp";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Patient,
    Doctor,
    Grower,
    Researcher,
    /// Config-seeded only; never stored as a user record.
    Admin,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Patient, Role::Doctor, Role::Grower, Role::Researcher, Role::Admin];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Patient => "patient",
            Role::Doctor => "doctor",
            Role::Grower => "grower",
            Role::Researcher => "researcher",
            Role::Admin => "admin",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResearcherRequest {
    None,
    Pending,
    Approved,
    Denied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approved,
    Denied,
}

/// Whether the request state machine allows `from -> to`.
pub fn request_transition(from: ResearcherRequest, to: ResearcherRequest) -> bool {
    use ResearcherRequest::*;
    matches!((from, to), (None, Pending) | (Pending, Approved) | (Pending, Denied))
}

/// The acting user of an operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Actor {
    pub user_id: String,
    pub role: Role,
}

/// A stored workflow object.
pub trait Entity: Serialize + DeserializeOwned + Clone {
    const SCHEMA: &'static str;
    fn entity_id(&self) -> &str;
    fn version(&self) -> i64;
    fn bump(&mut self);
}

macro_rules! entity {
    ($ty:ty, $schema:literal, $id:ident) => {
        impl Entity for $ty {
            const SCHEMA: &'static str = $schema;
            fn entity_id(&self) -> &str {
                &self.$id
            }
            fn version(&self) -> i64 {
                self.version
            }
            fn bump(&mut self) {
                self.version += 1;
            }
        }
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    #[serde(rename = "entity_id")]
    pub user_id: String,
    pub version: i64,
    pub username: String,
    pub password_digest: String,
    pub role: Role,
    pub researcher_request: ResearcherRequest,
    pub profile: FieldTree,
}
entity!(User, "hospital/user", user_id);

/// A user without credentials, as returned over the API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserView {
    pub user_id: String,
    pub username: String,
    pub role: Role,
    pub researcher_request: ResearcherRequest,
    pub profile: FieldTree,
}

impl From<&User> for UserView {
    fn from(u: &User) -> Self {
        UserView {
            user_id: u.user_id.clone(),
            username: u.username.clone(),
            role: u.role,
            researcher_request: u.researcher_request,
            profile: u.profile.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AnswerKind {
    IntegerScale { min: i64, max: i64 },
    Text,
    Boolean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub key: String,
    pub prompt: String,
    pub answer_kind: AnswerKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormTemplate {
    #[serde(rename = "entity_id")]
    pub form_id: String,
    pub version: i64,
    pub title: String,
    pub questions: Vec<Question>,
    pub created_by: String,
}
entity!(FormTemplate, "hospital/form", form_id);

impl FormTemplate {
    pub fn check(&self) -> Result<(), String> {
        if self.title.trim().is_empty() {
            return Err("form title is empty".into());
        }
        let mut keys = HashSet::new();
        for q in &self.questions {
            crate::model::check_field_name(&q.key).map_err(|e| e.to_string())?;
            if !keys.insert(q.key.as_str()) {
                return Err(format!("duplicate question key {:?}", q.key));
            }
            if let AnswerKind::IntegerScale { min, max } = q.answer_kind {
                if min >= max {
                    return Err(format!("question {:?}: scale min {min} must be below max {max}", q.key));
                }
            }
        }
        Ok(())
    }

    /// Checks submitted answers: every question answered with the right kind.
    pub fn check_answers(&self, answers: &FieldTree) -> Result<(), String> {
        for q in &self.questions {
            let a = answers.get(&q.key).ok_or_else(|| format!("question {:?} unanswered", q.key))?;
            let ok = match (&q.answer_kind, a) {
                (AnswerKind::IntegerScale { min, max }, FieldValue::Integer(v)) => v >= min && v <= max,
                (AnswerKind::Text, FieldValue::Text(_)) | (AnswerKind::Boolean, FieldValue::Bool(_)) => true,
                _ => false,
            };
            if !ok {
                return Err(format!("answer to {:?} does not fit {:?}", q.key, q.answer_kind));
            }
        }
        if let Some(extra) = answers.keys().find(|k| !self.questions.iter().any(|q| &q.key == *k)) {
            return Err(format!("unknown question {extra:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    Once,
    Daily,
    Weekly,
}

impl Recurrence {
    pub fn period_seconds(&self) -> Option<i64> {
        match self {
            Recurrence::Once => None,
            Recurrence::Daily => Some(86_400),
            Recurrence::Weekly => Some(7 * 86_400),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStatus {
    Pending,
    Submitted,
    Withdrawn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormAssignment {
    #[serde(rename = "entity_id")]
    pub assignment_id: String,
    pub version: i64,
    pub form_id: String,
    pub patient_id: String,
    pub recurrence: Recurrence,
    pub assigned_by: String,
    pub status: AssignmentStatus,
    pub due_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<FieldTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<Timestamp>,
}
entity!(FormAssignment, "hospital/assignment", assignment_id);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dose {
    pub amount: f64,
    pub unit: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentEntry {
    #[serde(rename = "entity_id")]
    pub entry_id: String,
    pub version: i64,
    pub patient_id: String,
    pub formulation: String,
    pub dose: Dose,
    pub severity: i64,
    pub effectiveness: i64,
    pub noted_at: Timestamp,
    #[serde(default)]
    pub free_notes: String,
}
entity!(TreatmentEntry, "hospital/treatment", entry_id);

/// What a patient submits; ids and timestamps are assigned on write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentInput {
    pub formulation: String,
    pub dose: Dose,
    pub severity: i64,
    pub effectiveness: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noted_at: Option<Timestamp>,
    #[serde(default)]
    pub free_notes: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub author_id: String,
    pub timestamp: Timestamp,
    pub text: String,
}

/// A treatment a doctor plans for the patient. Plans can be added and
/// removed; submitted entries are never edited.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedTreatment {
    pub plan_id: String,
    pub formulation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dose: Option<Dose>,
    #[serde(default)]
    pub notes: String,
    pub added_by: String,
    pub added_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    #[serde(rename = "entity_id")]
    pub case_id: String,
    pub version: i64,
    pub patient_id: String,
    pub assigned_doctors: BTreeSet<String>,
    pub annotations: Vec<Annotation>,
    pub treatments: Vec<String>,
    #[serde(default)]
    pub planned: Vec<PlannedTreatment>,
}
entity!(Case, "hospital/case", case_id);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicKind {
    Strain,
    Treatment,
    Experiment,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topic {
    pub kind: TopicKind,
    pub key: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subscription {
    #[serde(rename = "entity_id")]
    pub sub_id: String,
    pub version: i64,
    pub user_id: String,
    pub topic: Topic,
}
entity!(Subscription, "hospital/subscription", sub_id);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alert {
    #[serde(rename = "entity_id")]
    pub alert_id: String,
    pub version: i64,
    pub sub_id: String,
    pub user_id: String,
    pub event_ref: String,
    pub created_at: Timestamp,
    pub delivered: bool,
}
entity!(Alert, "hospital/alert", alert_id);

/// Builds the record for an entity version.
pub fn entity_record<T: Entity>(entity: &T, now: Timestamp) -> Result<MetaRecord, ModelError> {
    let value = json::parse(&crate::model::canonical_json(entity), false)?;
    let FieldValue::Map(fields) = value else {
        return Err(ModelError::InvariantViolation(format!("{} is not an object", T::SCHEMA)));
    };
    RecordDraft {
        source: SourceDescriptor::new(PROVIDER, None),
        sub_domain: SubDomain::Hospital,
        structure_class: StructureClass::Structured,
        schema_ref: Some(T::SCHEMA.to_owned()),
        created_at: now,
        fields,
    }
    .seal()
}

pub fn entity_from_record<T: Entity>(record: &MetaRecord) -> Option<T> {
    let value = serde_json::to_value(FieldValue::Map(record.fields().clone())).ok()?;
    serde_json::from_value(value).ok()
}

/// Built-in schema for treatment entries: both scales are integers 0 to 10.
pub fn treatment_schema() -> SchemaConstraint {
    let p = |s: &str| FieldPath::parse(s).expect("static path");
    let req = |s: &str, kind| RequiredPath { path: p(s), kind };
    SchemaConstraint {
        schema_ref: TreatmentEntry::SCHEMA.to_owned(),
        required_paths: vec![
            req("patient_id", ValueKind::Text),
            req("formulation", ValueKind::Text),
            req("severity", ValueKind::Integer),
            req("effectiveness", ValueKind::Integer),
        ],
        range_checks: ["severity", "effectiveness"]
            .iter()
            .map(|s| RangeCheck {
                path: p(s),
                min: 0.0,
                max: 10.0,
            })
            .collect(),
        cross_field_checks: vec![],
    }
}

/// Subscription topics a stored record announces.
pub fn topics_of(record: &MetaRecord) -> Vec<Topic> {
    let mut out = Vec::new();
    let mut push = |kind, key: &str| {
        if !key.is_empty() {
            let t = Topic { kind, key: key.to_owned() };
            if !out.contains(&t) {
                out.push(t);
            }
        }
    };
    if let Some(name) = record.text("strain_name") {
        push(TopicKind::Strain, name);
    }
    if let Some(FieldValue::List(tags)) = record.fields().get("tags") {
        for t in tags.iter().filter_map(FieldValue::as_text) {
            push(TopicKind::Strain, t);
        }
    }
    if let Some(f) = record.text("formulation") {
        push(TopicKind::Treatment, f);
    }
    if let Some(e) = record.text("experiment_id") {
        push(TopicKind::Experiment, e);
    }
    out
}

/// Current view of all workflow objects.
#[derive(Clone, Debug, Default)]
pub struct HospitalState {
    pub users: BTreeMap<String, User>,
    pub usernames: HashMap<String, String>,
    pub forms: BTreeMap<String, FormTemplate>,
    pub assignments: BTreeMap<String, FormAssignment>,
    pub treatments: BTreeMap<String, TreatmentEntry>,
    pub cases: BTreeMap<String, Case>,
    pub case_of_patient: HashMap<String, String>,
    pub subscriptions: BTreeMap<String, Subscription>,
    pub alerts: BTreeMap<String, Alert>,
    pub alert_keys: HashSet<(String, String)>,
}

fn fold<T: Entity>(map: &mut BTreeMap<String, T>, record: &MetaRecord) -> Option<T> {
    let e: T = entity_from_record(record)?;
    match map.get(e.entity_id()) {
        Some(cur) if cur.version() >= e.version() => None,
        _ => {
            map.insert(e.entity_id().to_owned(), e.clone());
            Some(e)
        }
    }
}

impl HospitalState {
    pub fn load<'a>(records: impl IntoIterator<Item = &'a MetaRecord>) -> Self {
        let mut s = HospitalState::default();
        for r in records {
            s.apply(r);
        }
        s
    }

    /// Folds one record into the view. Non-workflow records are ignored.
    pub fn apply(&mut self, r: &MetaRecord) {
        if r.sub_domain() != SubDomain::Hospital || r.source().provider != PROVIDER {
            return;
        }
        match r.schema_ref() {
            Some(User::SCHEMA) => {
                if let Some(u) = fold(&mut self.users, r) {
                    self.usernames.insert(u.username.clone(), u.user_id);
                }
            }
            Some(FormTemplate::SCHEMA) => {
                fold(&mut self.forms, r);
            }
            Some(FormAssignment::SCHEMA) => {
                fold(&mut self.assignments, r);
            }
            Some(TreatmentEntry::SCHEMA) => {
                fold(&mut self.treatments, r);
            }
            Some(Case::SCHEMA) => {
                if let Some(c) = fold(&mut self.cases, r) {
                    self.case_of_patient.insert(c.patient_id, c.case_id);
                }
            }
            Some(Subscription::SCHEMA) => {
                fold(&mut self.subscriptions, r);
            }
            Some(Alert::SCHEMA) => {
                if let Some(a) = fold(&mut self.alerts, r) {
                    self.alert_keys.insert((a.sub_id, a.event_ref));
                }
            }
            _ => {}
        }
    }

    pub fn user_by_name(&self, username: &str) -> Option<&User> {
        self.usernames.get(username).and_then(|id| self.users.get(id))
    }

    pub fn case_for(&self, patient_id: &str) -> Option<&Case> {
        self.case_of_patient.get(patient_id).and_then(|c| self.cases.get(c))
    }

    /// Whether `doctor_id` is assigned to the patient's case.
    pub fn treats(&self, doctor_id: &str, patient_id: &str) -> bool {
        self.case_for(patient_id).is_some_and(|c| c.assigned_doctors.contains(doctor_id))
    }

    /// Alerts that `(topic, record_id)` would raise, skipping pairs already
    /// alerted.
    pub fn pending_alerts(&self, topic: &Topic, event_ref: &str) -> Vec<&Subscription> {
        self.subscriptions
            .values()
            .filter(|s| s.topic == *topic && !self.alert_keys.contains(&(s.sub_id.clone(), event_ref.to_owned())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_state_machine() {
        use ResearcherRequest::*;
        let all = [None, Pending, Approved, Denied];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|a| all.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| request_transition(*a, *b))
            .collect();
        assert_eq!(allowed, vec![(None, Pending), (Pending, Approved), (Pending, Denied)]);
    }

    #[test]
    fn entity_round_trip() {
        let case = Case {
            case_id: "c1".into(),
            version: 3,
            patient_id: "p1".into(),
            assigned_doctors: ["d1".to_owned()].into(),
            annotations: vec![Annotation {
                author_id: "d1".into(),
                timestamp: Timestamp::from_unix(60).unwrap(),
                text: "stable".into(),
            }],
            treatments: vec!["t1".into()],
            planned: vec![],
        };
        let r = entity_record(&case, Timestamp::from_unix(0).unwrap()).unwrap();
        assert_eq!(r.schema_ref(), Some("hospital/case"));
        assert_eq!(r.text("entity_id"), Some("c1"));
        assert_eq!(entity_from_record::<Case>(&r), Some(case));
    }

    #[test]
    fn state_keeps_latest_version() {
        let t0 = Timestamp::from_unix(0).unwrap();
        let mut sub = Subscription {
            sub_id: "s".into(),
            version: 1,
            user_id: "u".into(),
            topic: Topic {
                kind: TopicKind::Strain,
                key: "OG-1".into(),
            },
        };
        let v1 = entity_record(&sub, t0).unwrap();
        sub.bump();
        sub.user_id = "u2".into();
        let v2 = entity_record(&sub, t0).unwrap();
        let s = HospitalState::load([&v2, &v1]);
        assert_eq!(s.subscriptions["s"].user_id, "u2");
    }

    #[test]
    fn form_checks() {
        let mut f = FormTemplate {
            form_id: "f".into(),
            version: 1,
            title: "Weekly".into(),
            questions: vec![Question {
                key: "pain".into(),
                prompt: "Pain today?".into(),
                answer_kind: AnswerKind::IntegerScale { min: 0, max: 10 },
            }],
            created_by: "d".into(),
        };
        assert!(f.check().is_ok());
        let answers: FieldTree = [("pain".to_owned(), FieldValue::Integer(4))].into();
        assert!(f.check_answers(&answers).is_ok());
        let bad: FieldTree = [("pain".to_owned(), FieldValue::Integer(11))].into();
        assert!(f.check_answers(&bad).is_err());
        f.questions[0].answer_kind = AnswerKind::IntegerScale { min: 5, max: 5 };
        assert!(f.check().is_err());
    }
}
