//! Hospital workflows. Every operation takes the acting user and enforces
//! ownership and case assignment itself, so the API only has to map roles
//! to endpoints.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Platform;
use crate::error::CdpError;
use crate::hospital::{
    anonymise, entity_record, hash_password, request_transition, verify_password, Actor, Alert, Annotation, AssignmentStatus, Case,
    Decision, Dose, Entity, FormAssignment, FormTemplate, PlannedTreatment, Question, Recurrence, ResearcherRequest, Role,
    Subscription, Topic, TreatmentEntry, TreatmentInput, User, UserView,
};
use crate::model::{FieldTree, FieldValue, RecordId};
use crate::quality::{has_errors, validate, IssueKind, ValidationIssue};

pub const MIN_PASSWORD_LEN: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case: Case,
    pub treatments: Vec<TreatmentEntry>,
}

/// A case as researchers see it: the anonymised case record and the
/// anonymised records of its treatments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResearchCase {
    pub record_id: RecordId,
    pub case: FieldTree,
    pub treatments: Vec<FieldTree>,
}

fn forbidden(why: &str) -> CdpError {
    CdpError::Forbidden(why.to_owned())
}

fn require(actor: &Actor, role: Role) -> Result<(), CdpError> {
    if actor.role == role {
        Ok(())
    } else {
        Err(CdpError::Forbidden(format!("requires role {role}")))
    }
}

impl Platform {
    pub fn register(&mut self, username: &str, password: &str, role: Role, profile: FieldTree) -> Result<UserView, CdpError> {
        if !matches!(role, Role::Patient | Role::Doctor | Role::Grower) {
            return Err(CdpError::RoleNotGrantable(role.to_string()));
        }
        if username.trim().is_empty() {
            return Err(CdpError::BadRequest("username is empty".into()));
        }
        let taken = self.state.user_by_name(username).is_some() || self.config.platform.admins.iter().any(|a| a.username == username);
        if taken {
            return Err(CdpError::DuplicateUsername(username.to_owned()));
        }
        if password.chars().count() < MIN_PASSWORD_LEN {
            return Err(CdpError::WeakPassword);
        }
        FieldValue::Map(profile.clone()).check("profile", true)?;
        let iterations = self.config.platform.pbkdf2_iterations;
        let user = User {
            user_id: self.new_id("u"),
            version: 1,
            username: username.to_owned(),
            password_digest: hash_password(password, iterations, self.rng()),
            role,
            researcher_request: ResearcherRequest::None,
            profile,
        };
        self.save(&user)?;
        if role == Role::Patient {
            let case = Case {
                case_id: self.new_id("c"),
                version: 1,
                patient_id: user.user_id.clone(),
                assigned_doctors: BTreeSet::new(),
                annotations: vec![],
                treatments: vec![],
                planned: vec![],
            };
            self.save(&case)?;
        }
        Ok(UserView::from(&user))
    }

    /// Checks credentials. Unknown users and wrong passwords fail alike.
    pub fn authenticate(&self, username: &str, password: &str) -> Result<Actor, CdpError> {
        if let Some(admin) = self.config.platform.admins.iter().find(|a| a.username == username) {
            if verify_password(password, &admin.password_digest) {
                return Ok(Actor {
                    user_id: admin_id(username),
                    role: Role::Admin,
                });
            }
            return Err(CdpError::Unauthorized);
        }
        match self.state.user_by_name(username) {
            Some(u) if verify_password(password, &u.password_digest) => Ok(Actor {
                user_id: u.user_id.clone(),
                role: u.role,
            }),
            _ => Err(CdpError::Unauthorized),
        }
    }

    /// The user's current identity, so role changes apply at once.
    pub fn actor(&self, user_id: &str) -> Option<Actor> {
        if let Some(name) = user_id.strip_prefix(ADMIN_PREFIX) {
            return self.config.platform.admins.iter().any(|a| a.username == name).then(|| Actor {
                user_id: user_id.to_owned(),
                role: Role::Admin,
            });
        }
        self.state.users.get(user_id).map(|u| Actor {
            user_id: u.user_id.clone(),
            role: u.role,
        })
    }

    pub fn user_view(&self, actor: &Actor) -> Result<UserView, CdpError> {
        match self.state.users.get(&actor.user_id) {
            Some(u) => Ok(UserView::from(u)),
            None if actor.role == Role::Admin => Ok(UserView {
                user_id: actor.user_id.clone(),
                username: actor.user_id[ADMIN_PREFIX.len()..].to_owned(),
                role: Role::Admin,
                researcher_request: ResearcherRequest::None,
                profile: FieldTree::new(),
            }),
            None => Err(CdpError::NotFound(format!("user {:?}", actor.user_id))),
        }
    }

    fn user(&self, user_id: &str) -> Result<User, CdpError> {
        self.state.users.get(user_id).cloned().ok_or_else(|| CdpError::NotFound(format!("user {user_id:?}")))
    }

    pub fn request_researcher(&mut self, actor: &Actor, user_id: &str) -> Result<UserView, CdpError> {
        if actor.user_id != user_id {
            return Err(forbidden("a request can only be made for oneself"));
        }
        if !matches!(actor.role, Role::Patient | Role::Doctor) {
            return Err(forbidden("only patients and doctors can request researcher access"));
        }
        let mut user = self.user(user_id)?;
        self.transition(&mut user, ResearcherRequest::Pending)?;
        self.save(&user)?;
        Ok(UserView::from(&user))
    }

    pub fn resolve_researcher(&mut self, actor: &Actor, user_id: &str, decision: Decision) -> Result<UserView, CdpError> {
        require(actor, Role::Admin)?;
        let mut user = self.user(user_id)?;
        let to = match decision {
            Decision::Approved => ResearcherRequest::Approved,
            Decision::Denied => ResearcherRequest::Denied,
        };
        self.transition(&mut user, to)?;
        if to == ResearcherRequest::Approved {
            user.role = Role::Researcher;
        }
        self.save(&user)?;
        Ok(UserView::from(&user))
    }

    fn transition(&self, user: &mut User, to: ResearcherRequest) -> Result<(), CdpError> {
        if !request_transition(user.researcher_request, to) {
            return Err(CdpError::transition(user.researcher_request, to));
        }
        user.researcher_request = to;
        user.bump();
        Ok(())
    }

    pub fn create_form(&mut self, actor: &Actor, title: &str, questions: Vec<Question>) -> Result<FormTemplate, CdpError> {
        require(actor, Role::Doctor)?;
        let form = FormTemplate {
            form_id: self.new_id("f"),
            version: 1,
            title: title.to_owned(),
            questions,
            created_by: actor.user_id.clone(),
        };
        form.check().map_err(CdpError::BadRequest)?;
        self.save(&form)?;
        Ok(form)
    }

    /// Forms the doctor created.
    pub fn forms(&self, actor: &Actor) -> Result<Vec<FormTemplate>, CdpError> {
        require(actor, Role::Doctor)?;
        Ok(self.state.forms.values().filter(|f| f.created_by == actor.user_id).cloned().collect())
    }

    fn patient(&self, patient_id: &str) -> Result<&User, CdpError> {
        self.state
            .users
            .get(patient_id)
            .filter(|u| u.role == Role::Patient)
            .ok_or_else(|| CdpError::UnknownPatient(patient_id.to_owned()))
    }

    /// The patient themself or a doctor on their case.
    fn may_read_patient(&self, actor: &Actor, patient_id: &str) -> Result<(), CdpError> {
        match actor.role {
            Role::Patient if actor.user_id == patient_id => Ok(()),
            Role::Doctor if self.state.treats(&actor.user_id, patient_id) => Ok(()),
            _ => Err(forbidden("not this patient's own data or assigned doctor")),
        }
    }

    pub fn assign_form(&mut self, actor: &Actor, form_id: &str, patient_id: &str, recurrence: Recurrence) -> Result<FormAssignment, CdpError> {
        require(actor, Role::Doctor)?;
        if !self.state.forms.contains_key(form_id) {
            return Err(CdpError::NotFound(format!("form {form_id:?}")));
        }
        self.patient(patient_id)?;
        if !self.state.treats(&actor.user_id, patient_id) {
            return Err(forbidden("doctor is not assigned to this patient's case"));
        }
        let assignment = FormAssignment {
            assignment_id: self.new_id("a"),
            version: 1,
            form_id: form_id.to_owned(),
            patient_id: patient_id.to_owned(),
            recurrence,
            assigned_by: actor.user_id.clone(),
            status: AssignmentStatus::Pending,
            due_at: self.now(),
            answers: None,
            submitted_at: None,
        };
        self.save(&assignment)?;
        Ok(assignment)
    }

    /// The patient's assignments, oldest due first.
    pub fn assignments(&self, actor: &Actor, patient_id: &str) -> Result<Vec<FormAssignment>, CdpError> {
        self.patient(patient_id)?;
        self.may_read_patient(actor, patient_id)?;
        let mut out: Vec<FormAssignment> = self.state.assignments.values().filter(|a| a.patient_id == patient_id).cloned().collect();
        out.sort_by(|a, b| a.due_at.cmp(&b.due_at).then_with(|| a.assignment_id.cmp(&b.assignment_id)));
        Ok(out)
    }

    pub fn form(&self, actor: &Actor, form_id: &str) -> Result<FormTemplate, CdpError> {
        let form = self.state.forms.get(form_id).ok_or_else(|| CdpError::NotFound(format!("form {form_id:?}")))?;
        let visible = match actor.role {
            Role::Doctor => true,
            Role::Patient => self.state.assignments.values().any(|a| a.form_id == form_id && a.patient_id == actor.user_id),
            _ => false,
        };
        if !visible {
            return Err(forbidden("form not assigned to this user"));
        }
        Ok(form.clone())
    }

    /// Submits answers. A recurring assignment is replaced by a new pending
    /// one due one period after the submitted one.
    pub fn submit_assignment(&mut self, actor: &Actor, assignment_id: &str, answers: FieldTree) -> Result<(FormAssignment, Option<FormAssignment>), CdpError> {
        require(actor, Role::Patient)?;
        let mut a = self
            .state
            .assignments
            .get(assignment_id)
            .cloned()
            .ok_or_else(|| CdpError::NotFound(format!("assignment {assignment_id:?}")))?;
        if a.patient_id != actor.user_id {
            return Err(forbidden("assignment belongs to another patient"));
        }
        if a.status != AssignmentStatus::Pending {
            return Err(CdpError::InvalidTransition {
                from: format!("{:?}", a.status).to_lowercase(),
                to: "submitted".into(),
            });
        }
        let form = self.state.forms.get(&a.form_id).ok_or_else(|| CdpError::NotFound(format!("form {:?}", a.form_id)))?;
        form.check_answers(&answers)
            .map_err(|m| CdpError::ValidationFailed(vec![ValidationIssue::error(IssueKind::WrongKind, None, m)]))?;
        let now = self.now();
        a.status = AssignmentStatus::Submitted;
        a.answers = Some(answers);
        a.submitted_at = Some(now);
        a.bump();
        self.save(&a)?;
        let next = match a.recurrence.period_seconds() {
            Some(period) => {
                let n = FormAssignment {
                    assignment_id: self.new_id("a"),
                    version: 1,
                    status: AssignmentStatus::Pending,
                    due_at: a.due_at.plus_seconds(period),
                    answers: None,
                    submitted_at: None,
                    ..a.clone()
                };
                self.save(&n)?;
                Some(n)
            }
            None => None,
        };
        Ok((a, next))
    }

    pub fn submit_treatment(&mut self, actor: &Actor, patient_id: &str, input: TreatmentInput) -> Result<TreatmentEntry, CdpError> {
        if !(actor.role == Role::Patient && actor.user_id == patient_id) {
            return Err(forbidden("only the patient can add treatment entries"));
        }
        let case_id = self
            .state
            .case_of_patient
            .get(patient_id)
            .cloned()
            .ok_or_else(|| CdpError::UnknownPatient(patient_id.to_owned()))?;
        let entry = TreatmentEntry {
            entry_id: self.new_id("t"),
            version: 1,
            patient_id: patient_id.to_owned(),
            formulation: input.formulation,
            dose: input.dose,
            severity: input.severity,
            effectiveness: input.effectiveness,
            noted_at: input.noted_at.unwrap_or_else(|| self.now()),
            free_notes: input.free_notes,
        };
        let record = entity_record(&entry, self.now())?;
        let schema = self
            .config
            .schema(TreatmentEntry::SCHEMA)
            .ok_or_else(|| CdpError::NotFound(format!("schema {}", TreatmentEntry::SCHEMA)))?;
        let issues = validate(&record, schema);
        if has_errors(&issues) {
            return Err(CdpError::ValidationFailed(issues));
        }
        let record = self.save(&entry)?;
        let mut case = self.state.cases[&case_id].clone();
        case.treatments.push(entry.entry_id.clone());
        case.bump();
        self.save(&case)?;
        self.notify(&[record])?;
        Ok(entry)
    }

    /// Newest first.
    pub fn treatments(&self, actor: &Actor, patient_id: &str) -> Result<Vec<TreatmentEntry>, CdpError> {
        self.patient(patient_id)?;
        self.may_read_patient(actor, patient_id)?;
        let mut out: Vec<TreatmentEntry> = self.state.treatments.values().filter(|t| t.patient_id == patient_id).cloned().collect();
        out.sort_by(|a, b| b.noted_at.cmp(&a.noted_at).then_with(|| a.entry_id.cmp(&b.entry_id)));
        Ok(out)
    }

    fn case(&self, case_id: &str) -> Result<&Case, CdpError> {
        self.state.cases.get(case_id).ok_or_else(|| CdpError::NotFound(format!("case {case_id:?}")))
    }

    fn assigned_case(&self, actor: &Actor, case_id: &str) -> Result<Case, CdpError> {
        require(actor, Role::Doctor)?;
        let case = self.case(case_id)?;
        if !case.assigned_doctors.contains(&actor.user_id) {
            return Err(forbidden("doctor is not assigned to this case"));
        }
        Ok(case.clone())
    }

    /// Doctors see their cases; the administrator sees all.
    pub fn cases(&self, actor: &Actor) -> Result<Vec<Case>, CdpError> {
        match actor.role {
            Role::Admin => Ok(self.state.cases.values().cloned().collect()),
            Role::Doctor => Ok(self
                .state
                .cases
                .values()
                .filter(|c| c.assigned_doctors.contains(&actor.user_id))
                .cloned()
                .collect()),
            _ => Err(forbidden("requires role doctor")),
        }
    }

    pub fn case_view(&self, actor: &Actor, case_id: &str) -> Result<CaseView, CdpError> {
        let case = self.assigned_case(actor, case_id)?;
        let treatments = case.treatments.iter().filter_map(|id| self.state.treatments.get(id).cloned()).collect();
        Ok(CaseView { case, treatments })
    }

    pub fn annotate(&mut self, actor: &Actor, case_id: &str, text: &str) -> Result<Annotation, CdpError> {
        let mut case = self.assigned_case(actor, case_id)?;
        if text.trim().is_empty() {
            return Err(CdpError::EmptyAnnotation);
        }
        let a = Annotation {
            author_id: actor.user_id.clone(),
            timestamp: self.now(),
            text: text.to_owned(),
        };
        case.annotations.push(a.clone());
        case.bump();
        self.save(&case)?;
        Ok(a)
    }

    pub fn assign_doctor(&mut self, actor: &Actor, case_id: &str, doctor_id: &str) -> Result<Case, CdpError> {
        require(actor, Role::Admin)?;
        let mut case = self.case(case_id)?.clone();
        match self.state.users.get(doctor_id) {
            Some(u) if u.role == Role::Doctor => {}
            _ => return Err(CdpError::NotFound(format!("doctor {doctor_id:?}"))),
        }
        if case.assigned_doctors.insert(doctor_id.to_owned()) {
            case.bump();
            self.save(&case)?;
        }
        Ok(case)
    }

    pub fn plan_treatment(&mut self, actor: &Actor, case_id: &str, formulation: &str, dose: Option<Dose>, notes: &str) -> Result<PlannedTreatment, CdpError> {
        let mut case = self.assigned_case(actor, case_id)?;
        if formulation.trim().is_empty() {
            return Err(CdpError::BadRequest("formulation is empty".into()));
        }
        let plan = PlannedTreatment {
            plan_id: self.new_id("p"),
            formulation: formulation.to_owned(),
            dose,
            notes: notes.to_owned(),
            added_by: actor.user_id.clone(),
            added_at: self.now(),
        };
        case.planned.push(plan.clone());
        case.bump();
        self.save(&case)?;
        Ok(plan)
    }

    pub fn remove_planned(&mut self, actor: &Actor, case_id: &str, plan_id: &str) -> Result<Case, CdpError> {
        let mut case = self.assigned_case(actor, case_id)?;
        let before = case.planned.len();
        case.planned.retain(|p| p.plan_id != plan_id);
        if case.planned.len() == before {
            return Err(CdpError::NotFound(format!("planned treatment {plan_id:?}")));
        }
        case.bump();
        self.save(&case)?;
        Ok(case)
    }

    /// All cases, anonymised, for researchers.
    pub fn research_cases(&self, actor: &Actor) -> Result<Vec<ResearchCase>, CdpError> {
        require(actor, Role::Researcher)?;
        let key = self.key().ok_or(CdpError::KeyMissing)?;
        let policy = &self.config.policy;
        let now = self.now();
        let mut out = Vec::new();
        for case in self.state.cases.values() {
            let anon = anonymise(&entity_record(case, now)?, policy, key)?;
            let mut treatments = Vec::new();
            for id in &case.treatments {
                if let Some(t) = self.state.treatments.get(id) {
                    treatments.push(anonymise(&entity_record(t, now)?, policy, key)?.fields().clone());
                }
            }
            out.push(ResearchCase {
                record_id: anon.id(),
                case: anon.fields().clone(),
                treatments,
            });
        }
        Ok(out)
    }

    pub fn subscribe(&mut self, actor: &Actor, topic: Topic) -> Result<Subscription, CdpError> {
        if actor.role == Role::Admin {
            return Err(forbidden("administrators do not subscribe"));
        }
        if topic.key.trim().is_empty() {
            return Err(CdpError::BadRequest("topic key is empty".into()));
        }
        if let Some(s) = self.state.subscriptions.values().find(|s| s.user_id == actor.user_id && s.topic == topic) {
            return Ok(s.clone());
        }
        let sub = Subscription {
            sub_id: self.new_id("s"),
            version: 1,
            user_id: actor.user_id.clone(),
            topic,
        };
        self.save(&sub)?;
        Ok(sub)
    }

    /// The actor's alerts, oldest first. Undelivered ones are marked
    /// delivered; the returned copies show the state before the call.
    pub fn take_alerts(&mut self, actor: &Actor) -> Result<Vec<Alert>, CdpError> {
        let mut mine: Vec<Alert> = self.state.alerts.values().filter(|a| a.user_id == actor.user_id).cloned().collect();
        mine.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.alert_id.cmp(&b.alert_id)));
        for a in mine.iter().filter(|a| !a.delivered) {
            let mut d = a.clone();
            d.delivered = true;
            d.bump();
            self.save(&d)?;
        }
        Ok(mine)
    }
}

const ADMIN_PREFIX: &str = "admin_";

fn admin_id(username: &str) -> String {
    format!("{ADMIN_PREFIX}{username}")
}
