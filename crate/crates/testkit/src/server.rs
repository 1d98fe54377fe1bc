//! An in-process server over a seeded clinic, request helpers, and the
//! access-matrix and leak checks.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use cdp_api::{router, AppState, TokenPair};
use cdp_core::capture::RawDocument;
use cdp_core::clock::{Clock, ManualClock};
use cdp_core::config::Config;
use cdp_core::hospital::{Actor, Decision, Recurrence, Role};
use crate::clinic::{self, Clinic, ADMIN, ADMIN_PASSWORD};
pub use crate::clinic::PASSWORD;
use crate::fixture::{documents, write_config, KEY};
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Ids {
    pub admin: String,
    pub patient: String,
    pub doctor: String,
    pub grower: String,
    pub researcher: String,
    pub case_id: String,
    pub form_id: String,
    pub assignment_id: String,
    pub plan_id: String,
    pub sample_id: String,
}

pub struct World {
    pub app: Router,
    pub state: Arc<AppState>,
    pub clock: Arc<ManualClock>,
    pub ids: Ids,
    pub config_dir: TempDir,
    pub store_dir: TempDir,
}

pub const USERS: [(&str, Role); 5] = [
    ("p.huber", Role::Patient),
    ("dr.weber", Role::Doctor),
    ("g.baumann", Role::Grower),
    ("r.lange", Role::Researcher),
    (ADMIN, Role::Admin),
];

pub fn password(username: &str) -> &'static str {
    if username == ADMIN {
        ADMIN_PASSWORD
    } else {
        PASSWORD
    }
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

impl World {
    /// A clinic with one user per role, a weekly form assigned to the
    /// patient, a planned treatment, the strain samples and an index.
    pub fn new() -> Self {
        Self::build(|_, _| {})
    }

    /// As [`World::new`], running `seed` on the platform before the index
    /// is built.
    pub fn build(seed: impl FnOnce(&mut Clinic, &Actor)) -> Self {
        let config_dir = tempfile::tempdir().unwrap();
        write_config(config_dir.path());
        let store_dir = tempfile::tempdir().unwrap();
        let mut c = Clinic::open(store_dir.path(), Config::load(config_dir.path()).unwrap(), Some(KEY));
        let grower = clinic::register(&mut c.platform, "g.baumann", Role::Grower, "Gerd Baumann");
        let applicant = clinic::register(&mut c.platform, "r.lange", Role::Patient, "Rosa Lange");
        c.platform.request_researcher(&applicant, &applicant.user_id).unwrap();
        c.platform.resolve_researcher(&c.admin, &applicant.user_id, Decision::Approved).unwrap();
        let form = c
            .platform
            .create_form(
                &c.doctor,
                "Weekly check",
                vec![cdp_core::hospital::Question {
                    key: "pain".into(),
                    prompt: "Pain today".into(),
                    answer_kind: cdp_core::hospital::AnswerKind::IntegerScale { min: 0, max: 10 },
                }],
            )
            .unwrap();
        let assignment = c.platform.assign_form(&c.doctor, &form.form_id, &c.patient.user_id, Recurrence::Weekly).unwrap();
        let plan = c.platform.plan_treatment(&c.doctor, &c.case_id, "CBD oil 5%", None, "start low").unwrap();
        let (name, bytes, spec, provider) = documents().remove(0);
        let doc = RawDocument::new(bytes, Some(name.into()), c.platform.now(), provider);
        c.platform.ingest(&doc, Some(spec)).unwrap();
        let researcher = c.platform.actor(&applicant.user_id).unwrap();
        seed(&mut c, &researcher);
        c.platform.reindex().unwrap();

        let ids = Ids {
            admin: c.admin.user_id.clone(),
            patient: c.patient.user_id.clone(),
            doctor: c.doctor.user_id.clone(),
            grower: grower.user_id,
            researcher: applicant.user_id,
            case_id: c.case_id.clone(),
            form_id: form.form_id,
            assignment_id: assignment.assignment_id,
            plan_id: plan.plan_id,
            sample_id: "S-001".into(),
        };
        let clock = c.clock.clone();
        let state = AppState::new(c.platform, clock.clone() as Arc<dyn Clock>);
        World {
            app: router(state.clone()),
            state,
            clock,
            ids,
            config_dir,
            store_dir,
        }
    }

    pub fn user_id(&self, role: Role) -> &str {
        match role {
            Role::Patient => &self.ids.patient,
            Role::Doctor => &self.ids.doctor,
            Role::Grower => &self.ids.grower,
            Role::Researcher => &self.ids.researcher,
            Role::Admin => &self.ids.admin,
        }
    }

    pub async fn call(&self, method: &str, uri: &str, token: Option<&str>, body: Option<&Value>) -> Resp {
        let bytes = body.map(|b| serde_json::to_vec(b).unwrap()).unwrap_or_default();
        self.raw(method, uri, token, "application/json", bytes).await
    }

    pub async fn raw(&self, method: &str, uri: &str, token: Option<&str>, content_type: &str, body: Vec<u8>) -> Resp {
        let mut req = Request::builder().method(Method::from_bytes(method.as_bytes()).unwrap()).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if !body.is_empty() {
            req = req.header("content-type", content_type);
        }
        let res = self.app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8(bytes.to_vec()).unwrap();
        let json = serde_json::from_str(&text).unwrap_or(Value::Null);
        Resp { status, json, text }
    }

    pub async fn login(&self, username: &str, password: &str) -> TokenPair {
        let r = self
            .call("POST", "/auth/login", None, Some(&serde_json::json!({"username": username, "password": password})))
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.text);
        serde_json::from_value(r.json).unwrap()
    }

    pub async fn token(&self, role: Role) -> String {
        let (name, _) = USERS.iter().find(|(_, r)| *r == role).unwrap();
        self.login(name, password(name)).await.access_token
    }
}

#[derive(Debug)]
pub struct Resp {
    pub status: StatusCode,
    pub json: Value,
    pub text: String,
}

/// A multipart/form-data body; returns (content type, bytes).
pub fn multipart(fields: &[(&str, Option<&str>, &[u8])]) -> (String, Vec<u8>) {
    let boundary = "cdp-test-boundary-7MA4YWxkTrZu0gW";
    let mut out = Vec::new();
    for (name, file, data) in fields {
        out.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        match file {
            Some(f) => out.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\n\r\n").as_bytes()),
            None => out.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        out.extend_from_slice(data);
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), out)
}

/// Every string anywhere in a JSON value.
pub fn strings(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.push(s.clone()),
        Value::Array(a) => a.iter().for_each(|x| strings(x, out)),
        Value::Object(m) => {
            for (k, x) in m {
                out.push(k.clone());
                strings(x, out);
            }
        }
        _ => {}
    }
}

/// One row of the documented access table; `roles` is None for public
/// endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub method: String,
    pub path: String,
    pub roles: Option<BTreeSet<Role>>,
}

fn role_named(s: &str) -> Role {
    match s {
        "patient" => Role::Patient,
        "doctor" => Role::Doctor,
        "grower" => Role::Grower,
        "researcher" => Role::Researcher,
        "admin" => Role::Admin,
        other => panic!("unknown role {other:?} in access table"),
    }
}

/// The access table from the README.
pub fn documented_policy() -> Vec<Rule> {
    let readme = std::fs::read_to_string(crate::repo_dir().join("README.md")).unwrap();
    let section = readme.split("## Access policy").nth(1).expect("README has an access policy section");
    let mut rules = Vec::new();
    for line in section.lines().take_while(|l| !l.starts_with("## ")) {
        let cells: Vec<&str> = line.trim().trim_matches('|').split('|').map(str::trim).collect();
        if !line.trim_start().starts_with('|') || cells.len() != 3 || cells[0] == "Method" || cells[0].starts_with('-') {
            continue;
        }
        let roles = match cells[2] {
            "public" => None,
            list => Some(list.split(',').map(|r| role_named(r.trim())).collect()),
        };
        rules.push(Rule {
            method: cells[0].to_owned(),
            path: cells[1].to_owned(),
            roles,
        });
    }
    assert!(!rules.is_empty(), "access table not found");
    rules
}

pub const PRINCIPALS: [Option<Role>; 6] = [None, Some(Role::Patient), Some(Role::Doctor), Some(Role::Grower), Some(Role::Researcher), Some(Role::Admin)];
pub const MATRIX_METHODS: [&str; 5] = ["GET", "POST", "PUT", "PATCH", "DELETE"];

#[derive(Debug, Default)]
pub struct MatrixRun {
    pub cells: usize,
    pub violations: Vec<String>,
}

impl World {
    fn concrete(&self, template: &str, who: Option<Role>) -> String {
        let own = self.user_id(who.unwrap_or(Role::Patient)).to_owned();
        let id = if template.starts_with("/users/") {
            own
        } else if template.starts_with("/forms/") {
            self.ids.form_id.clone()
        } else if template.starts_with("/patients/") {
            self.ids.patient.clone()
        } else if template.starts_with("/assignments/") {
            self.ids.assignment_id.clone()
        } else {
            self.ids.case_id.clone()
        };
        let mut uri = template
            .replace("{id}", &id)
            .replace("{plan_id}", &self.ids.plan_id)
            .replace("{sample_id}", &self.ids.sample_id);
        if template == "/search" {
            uri.push_str("?q=pain");
        }
        uri
    }

    /// A body that makes a public endpoint succeed.
    async fn public_body(&self, path: &str, n: usize) -> Value {
        match path {
            "/auth/register" => serde_json::json!({"username": format!("matrix-{n}"), "password": PASSWORD, "role": "patient"}),
            "/auth/login" => serde_json::json!({"username": "p.huber", "password": PASSWORD}),
            "/auth/refresh" => serde_json::json!({"refresh_token": self.login("p.huber", PASSWORD).await.refresh_token}),
            _ => serde_json::json!({}),
        }
    }

    /// Every principal (anonymous and each role) against every documented
    /// path with every method. Denied cells must answer 401 (anonymous)
    /// or 403; allowed cells must get past the access check, and allowed
    /// reads must succeed.
    pub async fn access_matrix(&self, rules: &[Rule]) -> MatrixRun {
        let mut tokens = std::collections::BTreeMap::new();
        for (name, role) in USERS {
            tokens.insert(role, self.login(name, password(name)).await.access_token);
        }
        let mut paths: Vec<&str> = Vec::new();
        for r in rules {
            if !paths.contains(&r.path.as_str()) {
                paths.push(&r.path);
            }
        }
        let mut run = MatrixRun::default();
        for path in paths {
            for method in MATRIX_METHODS {
                let rule = rules.iter().find(|r| r.path == path && r.method == method);
                for who in PRINCIPALS {
                    run.cells += 1;
                    let token = who.map(|r| tokens[&r].as_str());
                    let uri = self.concrete(path, who);
                    let public = matches!(rule, Some(Rule { roles: None, .. }));
                    let body = if public { self.public_body(path, run.cells).await } else { serde_json::json!({}) };
                    let r = self.call(method, &uri, token, Some(&body)).await;
                    let allowed = match rule {
                        None => false,
                        Some(Rule { roles: None, .. }) => true,
                        Some(Rule { roles: Some(set), .. }) => who.is_some_and(|w| set.contains(&w)),
                    };
                    let label = format!("{} {method} {path}", who.map_or("anonymous", |r| r.as_str()));
                    let expected_denial = if who.is_none() {
                        (StatusCode::UNAUTHORIZED, "unauthorized")
                    } else {
                        (StatusCode::FORBIDDEN, "forbidden")
                    };
                    if !allowed {
                        if (r.status, r.json["error"].as_str().unwrap_or("")) != expected_denial {
                            run.violations.push(format!("{label}: expected {} got {} {}", expected_denial.0, r.status, r.text));
                        }
                    } else if r.status == StatusCode::UNAUTHORIZED || r.status == StatusCode::FORBIDDEN {
                        run.violations.push(format!("{label}: allowed but got {} {}", r.status, r.text));
                    } else if (public || method == "GET") && !r.status.is_success() {
                        run.violations.push(format!("{label}: expected success, got {} {}", r.status, r.text));
                    }
                }
            }
        }
        for path in ["/", "/admin", "/records", "/patients", "/users", "/research"] {
            for who in PRINCIPALS {
                run.cells += 1;
                let r = self.call("GET", path, who.map(|r| tokens[&r].as_str()), None).await;
                if r.status.is_success() {
                    run.violations.push(format!("GET {path} answered {}", r.status));
                }
            }
        }
        run
    }
}

/// Identifier strings planted into a clinic, and the patients' user ids.
#[derive(Debug, Default)]
pub struct Planted {
    pub identifiers: Vec<String>,
    pub patient_ids: Vec<String>,
}

const FORMULATIONS: [&str; 4] = ["CBD oil 10%", "Harlequin flower", "THC:CBD 1:1 spray", "Dronabinol capsules"];

/// 15 registered patients and 5 intake rows, five identifiers each, with
/// treatments, annotations and a researcher subscription so alerts flow.
pub fn plant(c: &mut Clinic, researcher: &Actor) -> Planted {
    use cdp_core::hospital::{Topic, TopicKind};
    use cdp_core::model::{FieldTree, FieldValue};
    let mut planted = Planted::default();
    for f in FORMULATIONS {
        c.platform.subscribe(researcher, Topic { kind: TopicKind::Treatment, key: f.into() }).unwrap();
    }
    for i in 0..15 {
        let tag = format!("zq{i:02}w");
        let username = format!("user.{tag}");
        let name = format!("Name{tag} Surname{tag}");
        let email = format!("{tag}@mail.example");
        let phone = format!("+41 79 7{i:02} 31 {i:02}");
        let dob = format!("19{}-0{}-1{}", 50 + i, 1 + i % 9, i % 10);
        let contact: std::collections::BTreeMap<String, FieldValue> =
            [("email".to_owned(), FieldValue::text(&email)), ("phone".to_owned(), FieldValue::text(&phone))].into();
        let mut profile = FieldTree::new();
        profile.insert("name".into(), FieldValue::text(&name));
        profile.insert("contact".into(), FieldValue::Map(contact));
        profile.insert("dob".into(), FieldValue::text(&dob));
        let user = c.platform.register(&username, PASSWORD, Role::Patient, profile).unwrap();
        let patient = Actor { user_id: user.user_id.clone(), role: Role::Patient };
        let entry = clinic::treatment(FORMULATIONS[i % 4], 3 + (i as i64 % 7), i as i64 % 11);
        c.platform.submit_treatment(&patient, &patient.user_id, entry).unwrap();
        let case_id = c.platform.state().case_for(&patient.user_id).unwrap().case_id.clone();
        c.platform.assign_doctor(&c.admin, &case_id, &c.doctor.user_id).unwrap();
        c.platform.annotate(&c.doctor, &case_id, "responds well, continue dose").unwrap();
        planted.identifiers.extend([username, name, email, phone, dob]);
        planted.patient_ids.push(user.user_id);
    }
    let mut csv = String::from("patient_id,name,email,phone,dob,insurance_no,condition,formulation\n");
    for i in 0..5 {
        let tag = format!("mk{i:02}v");
        let row = [
            format!("MRN-{tag}"),
            format!("Given{tag} Family{tag}"),
            format!("{tag}@clinic.example"),
            format!("+41 31 6{i:02} 44 {i:02}"),
            format!("20{:02}-1{}-2{}", 1 + i, i % 3, i),
        ];
        csv.push_str(&format!("{},none,chronic pain,{}\n", row.join(","), FORMULATIONS[i % 4]));
        planted.identifiers.extend(row);
    }
    let doc = RawDocument::new(csv.into_bytes(), Some("intake.csv".into()), c.platform.now(), "hospital:intake");
    let report = c.platform.ingest(&doc, Some("hospital/intake")).unwrap();
    assert_eq!(report.records_produced, 5, "{report:?}");
    assert_eq!(planted.identifiers.len(), 100);
    planted
}

#[derive(Debug, Default)]
pub struct LeakRun {
    pub requests: usize,
    pub leaks: Vec<String>,
}

fn enc(s: &str) -> String {
    percent_encoding::utf8_percent_encode(s, percent_encoding::NON_ALPHANUMERIC).to_string()
}

impl World {
    /// Follows every string a researcher can obtain back into every
    /// researcher-reachable endpoint that takes a parameter, and reports
    /// any response containing a planted identifier or patient id. Also
    /// probes the index with each planted identifier.
    pub async fn researcher_closure(&self, planted: &Planted, max_requests: usize) -> LeakRun {
        let token = self.token(Role::Researcher).await;
        let mut run = LeakRun::default();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut queue: std::collections::VecDeque<String> = std::collections::VecDeque::new();
        // the planted tags ("zq00w") occur nowhere else, so searching for
        // any token carrying one must find nothing. Plain digit runs from
        // phones and dates also occur in timestamps and are not probed.
        let distinctive = planted.identifiers.iter().flat_map(|i| i.split(|c: char| !c.is_alphanumeric())).filter(|t| {
            t.chars().any(|c| c.is_ascii_digit()) && t.chars().any(|c| c.is_alphabetic())
        });
        for t in distinctive.collect::<BTreeSet<_>>() {
            run.requests += 1;
            let r = self.call("GET", &format!("/search?q={}&limit=500", enc(t)), Some(&token), None).await;
            if r.json["total"] != 0 {
                run.leaks.push(format!("search for {t:?} found {} hits", r.json["total"]));
            }
        }
        // the closure starts from what a researcher knows without access
        for f in FORMULATIONS {
            queue.push_back(f.to_owned());
        }
        for s in ["pain", "chronic", "cbd", "oil", "dose", "continue", "S-001", "S-002", "S-003"] {
            queue.push_back(s.into());
        }
        let mut uris: Vec<String> = vec![
            "/users/me".into(),
            "/research/cases?limit=500".into(),
            "/strains/consistency".into(),
            "/alerts?limit=500".into(),
            "/cases".into(),
            "/forms".into(),
        ];
        for id in &planted.patient_ids {
            uris.push(format!("/patients/{id}/treatments"));
            uris.push(format!("/patients/{id}/assignments"));
        }
        loop {
            for uri in uris.drain(..) {
                if run.requests >= max_requests {
                    return run;
                }
                run.requests += 1;
                let r = self.call("GET", &uri, Some(&token), None).await;
                let lower = r.text.to_lowercase();
                for ident in planted.identifiers.iter().chain(&planted.patient_ids) {
                    if lower.contains(&ident.to_lowercase()) {
                        run.leaks.push(format!("{uri}: {ident:?}"));
                    }
                }
                let mut found = Vec::new();
                strings(&r.json, &mut found);
                for s in found {
                    if seen.insert(s.clone()) {
                        queue.push_back(s);
                    }
                }
            }
            let Some(s) = queue.pop_front() else {
                return run;
            };
            seen.insert(s.clone());
            if s.len() > 256 {
                for t in s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
                    if seen.insert(t.to_owned()) {
                        queue.push_back(t.to_owned());
                    }
                }
                continue;
            }
            uris.push(format!("/search?q={}&limit=500", enc(&s)));
            uris.push(format!("/strains/{}/similar?k=500", enc(&s)));
        }
    }
}
