//! A seeded hospital: an administrator fixture, registered users and the
//! scripted workflow scenarios.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use cdp_core::clock::ManualClock;
use cdp_core::config::{AdminFixture, Config, PlatformConfig};
use cdp_core::hospital::{
    hash_password, Actor, AnswerKind, Case, Decision, Dose, Entity, Question, Recurrence, ResearcherRequest, Role, TreatmentInput,
};
use cdp_core::model::{canonical_json, FieldTree, FieldValue};
use cdp_core::store::ScanFilter;
use cdp_core::{CdpError, Platform};

use crate::{rng, t0};

pub const ADMIN: &str = "admin";
pub const ADMIN_PASSWORD: &str = "admin-password-1";
pub const PASSWORD: &str = "correct-horse-1";
pub const ITERATIONS: u32 = 1_000;
const WEEK: i64 = 7 * 86_400;

pub fn platform_config() -> PlatformConfig {
    PlatformConfig {
        admins: vec![AdminFixture {
            username: ADMIN.into(),
            password_digest: hash_password(ADMIN_PASSWORD, ITERATIONS, &mut rng(0)),
        }],
        pbkdf2_iterations: ITERATIONS,
    }
}

/// Writes `platform.json` next to a fixture config.
pub fn write_platform(config_dir: &Path) {
    let mut b = canonical_json(&platform_config());
    b.push(b'\n');
    fs::write(config_dir.join("platform.json"), b).unwrap();
}

pub struct Clinic {
    pub platform: Platform,
    pub clock: Arc<ManualClock>,
    pub admin: Actor,
    pub doctor: Actor,
    pub patient: Actor,
    pub case_id: String,
}

impl Clinic {
    /// A platform with one doctor assigned to one patient's case. Reopening
    /// a seeded store reuses its users.
    pub fn open(store: &Path, mut config: Config, key: Option<&[u8]>) -> Self {
        config.platform = platform_config();
        let clock = Arc::new(ManualClock::new(t0()));
        let mut platform = Platform::open(store, config, clock.clone(), key.map(<[u8]>::to_vec)).unwrap();
        let admin = platform.authenticate(ADMIN, ADMIN_PASSWORD).unwrap();
        let doctor = existing_or_register(&mut platform, "dr.weber", Role::Doctor, "Anna Weber");
        let patient = existing_or_register(&mut platform, "p.huber", Role::Patient, "Paul Huber");
        let case_id = platform.state().case_for(&patient.user_id).unwrap().case_id.clone();
        platform.assign_doctor(&admin, &case_id, &doctor.user_id).unwrap();
        Clinic {
            platform,
            clock,
            admin,
            doctor,
            patient,
            case_id,
        }
    }
}

pub fn register(p: &mut Platform, username: &str, role: Role, name: &str) -> Actor {
    let mut profile = FieldTree::new();
    profile.insert("name".into(), FieldValue::text(name));
    let v = p.register(username, PASSWORD, role, profile).unwrap();
    Actor { user_id: v.user_id, role }
}

fn existing_or_register(p: &mut Platform, username: &str, role: Role, name: &str) -> Actor {
    match p.state().user_by_name(username) {
        Some(u) => Actor {
            user_id: u.user_id.clone(),
            role: u.role,
        },
        None => register(p, username, role, name),
    }
}

pub fn treatment(formulation: &str, severity: i64, effectiveness: i64) -> TreatmentInput {
    TreatmentInput {
        formulation: formulation.into(),
        dose: Dose {
            amount: 10.0,
            unit: "mg".into(),
        },
        severity,
        effectiveness,
        noted_at: None,
        free_notes: String::new(),
    }
}

fn refreshed(p: &Platform, a: &Actor) -> Actor {
    p.actor(&a.user_id).unwrap()
}

/// none -> pending -> approved|denied, nothing else.
pub fn researcher_request_scenario(c: &mut Clinic) {
    let p = &mut c.platform;
    let applicant = register(p, "r.keller", Role::Patient, "Rita Keller");
    assert!(matches!(p.research_cases(&applicant), Err(CdpError::Forbidden(_))));
    assert!(matches!(p.resolve_researcher(&c.admin, &applicant.user_id, Decision::Approved), Err(CdpError::InvalidTransition { .. })));
    assert!(matches!(p.request_researcher(&c.patient, &applicant.user_id), Err(CdpError::Forbidden(_))));

    let v = p.request_researcher(&applicant, &applicant.user_id).unwrap();
    assert_eq!((v.researcher_request, v.role), (ResearcherRequest::Pending, Role::Patient));
    assert!(matches!(p.request_researcher(&applicant, &applicant.user_id), Err(CdpError::InvalidTransition { .. })));
    // pending grants nothing
    assert!(matches!(p.research_cases(&refreshed(p, &applicant)), Err(CdpError::Forbidden(_))));
    assert!(matches!(p.resolve_researcher(&c.doctor, &applicant.user_id, Decision::Approved), Err(CdpError::Forbidden(_))));

    let v = p.resolve_researcher(&c.admin, &applicant.user_id, Decision::Approved).unwrap();
    assert_eq!((v.researcher_request, v.role), (ResearcherRequest::Approved, Role::Researcher));
    let researcher = refreshed(p, &applicant);
    assert_eq!(researcher.role, Role::Researcher);
    match p.key() {
        Some(_) => assert!(p.research_cases(&researcher).is_ok()),
        None => assert!(matches!(p.research_cases(&researcher), Err(CdpError::KeyMissing))),
    }
    assert!(matches!(p.resolve_researcher(&c.admin, &applicant.user_id, Decision::Denied), Err(CdpError::InvalidTransition { .. })));

    let doc2 = register(p, "dr.roth", Role::Doctor, "Max Roth");
    p.request_researcher(&doc2, &doc2.user_id).unwrap();
    let v = p.resolve_researcher(&c.admin, &doc2.user_id, Decision::Denied).unwrap();
    assert_eq!((v.researcher_request, v.role), (ResearcherRequest::Denied, Role::Doctor));
    assert!(matches!(p.request_researcher(&doc2, &doc2.user_id), Err(CdpError::InvalidTransition { .. })));

    let grower = register(p, "g.baumann", Role::Grower, "Gerd Baumann");
    assert!(matches!(p.request_researcher(&grower, &grower.user_id), Err(CdpError::Forbidden(_))));
    assert!(matches!(
        p.register("r.direct", PASSWORD, Role::Researcher, FieldTree::new()),
        Err(CdpError::RoleNotGrantable(_))
    ));
}

/// A weekly assignment regenerates due exactly seven days later on each
/// submission; a one-off does not.
pub fn weekly_form_scenario(c: &mut Clinic) {
    let p = &mut c.platform;
    let questions = vec![
        Question {
            key: "pain".into(),
            prompt: "Pain today".into(),
            answer_kind: AnswerKind::IntegerScale { min: 0, max: 10 },
        },
        Question {
            key: "slept".into(),
            prompt: "Slept well".into(),
            answer_kind: AnswerKind::Boolean,
        },
    ];
    let form = p.create_form(&c.doctor, "Weekly check", questions).unwrap();
    assert!(matches!(p.create_form(&c.patient, "x", vec![]), Err(CdpError::Forbidden(_))));
    let first = p.assign_form(&c.doctor, &form.form_id, &c.patient.user_id, Recurrence::Weekly).unwrap();
    assert_eq!(first.due_at, t0());

    let mut answers = FieldTree::new();
    answers.insert("pain".into(), FieldValue::Integer(4));
    answers.insert("slept".into(), FieldValue::Bool(true));
    let mut bad = answers.clone();
    bad.insert("pain".into(), FieldValue::Integer(11));
    assert!(matches!(p.submit_assignment(&c.patient, &first.assignment_id, bad), Err(CdpError::ValidationFailed(_))));

    c.clock.advance(3 * 86_400);
    let (done, next) = p.submit_assignment(&c.patient, &first.assignment_id, answers.clone()).unwrap();
    let next = next.expect("weekly assignment regenerates");
    assert_eq!(done.submitted_at, Some(t0().plus_seconds(3 * 86_400)));
    assert_eq!(next.due_at, first.due_at.plus_seconds(WEEK));
    assert_eq!((next.form_id.as_str(), next.recurrence), (form.form_id.as_str(), Recurrence::Weekly));
    assert!(matches!(p.submit_assignment(&c.patient, &first.assignment_id, answers.clone()), Err(CdpError::InvalidTransition { .. })));

    let (_, third) = p.submit_assignment(&c.patient, &next.assignment_id, answers.clone()).unwrap();
    assert_eq!(third.unwrap().due_at, first.due_at.plus_seconds(2 * WEEK));

    let once = p.assign_form(&c.doctor, &form.form_id, &c.patient.user_id, Recurrence::Once).unwrap();
    assert!(p.submit_assignment(&c.patient, &once.assignment_id, answers).unwrap().1.is_none());

    let listed = p.assignments(&c.patient, &c.patient.user_id).unwrap();
    assert_eq!(listed.len(), 4);
    assert!(listed.windows(2).all(|w| w[0].due_at <= w[1].due_at));
}

/// Annotations only ever grow, and every earlier case version stays in
/// the store.
pub fn annotation_scenario(c: &mut Clinic) {
    let p = &mut c.platform;
    let mut seen: Vec<String> = Vec::new();
    for text in ["first visit", "dose raised to 20 mg", "sleep improved"] {
        c.clock.advance(3_600);
        let a = p.annotate(&c.doctor, &c.case_id, text).unwrap();
        assert_eq!((a.author_id.as_str(), a.text.as_str(), a.timestamp), (c.doctor.user_id.as_str(), text, p.now()));
        seen.push(text.into());
        let view = p.case_view(&c.doctor, &c.case_id).unwrap();
        let texts: Vec<String> = view.case.annotations.iter().map(|a| a.text.clone()).collect();
        assert_eq!(texts, seen);
    }
    assert!(matches!(p.annotate(&c.doctor, &c.case_id, "  "), Err(CdpError::EmptyAnnotation)));
    let outsider = register(p, "dr.frei", Role::Doctor, "Eva Frei");
    assert!(matches!(p.annotate(&outsider, &c.case_id, "note"), Err(CdpError::Forbidden(_))));
    assert!(matches!(p.annotate(&c.patient, &c.case_id, "note"), Err(CdpError::Forbidden(_))));

    let mut versions: Vec<Case> = p
        .store()
        .scan(&ScanFilter::schema(Case::SCHEMA))
        .filter_map(cdp_core::hospital::entity_from_record::<Case>)
        .filter(|k| k.case_id == c.case_id)
        .collect();
    versions.sort_by_key(|k| k.version);
    assert!(versions.len() >= 4);
    for w in versions.windows(2) {
        assert_eq!(w[1].version, w[0].version + 1);
        assert!(w[1].annotations.starts_with(&w[0].annotations), "annotations rewritten between versions");
    }
}

/// Severity and effectiveness outside 0..=10 are rejected and nothing is
/// written.
pub fn treatment_range_scenario(c: &mut Clinic) {
    let p = &mut c.platform;
    for (s, e) in [(11, 4), (7, 11), (-1, 4), (7, -1)] {
        let before = p.store().records().len();
        match p.submit_treatment(&c.patient, &c.patient.user_id, treatment("CBD oil", s, e)) {
            Err(CdpError::ValidationFailed(issues)) => assert!(!issues.is_empty()),
            other => panic!("severity {s} effectiveness {e}: {other:?}"),
        }
        assert_eq!(p.store().records().len(), before);
    }
    for (s, e) in [(0, 0), (10, 10), (7, 4)] {
        let entry = p.submit_treatment(&c.patient, &c.patient.user_id, treatment("CBD oil", s, e)).unwrap();
        assert_eq!((entry.severity, entry.effectiveness), (s, e));
    }
    assert!(matches!(
        p.submit_treatment(&c.doctor, &c.patient.user_id, treatment("CBD oil", 5, 5)),
        Err(CdpError::Forbidden(_))
    ));
    let view = p.case_view(&c.doctor, &c.case_id).unwrap();
    assert_eq!(view.treatments.len(), 3);
}
