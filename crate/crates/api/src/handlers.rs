use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::response::Response;
use cdp_core::capture::RawDocument;
use cdp_core::hospital::{Decision, Dose, Question, Recurrence, Role, Topic, TreatmentInput};
use cdp_core::model::{check_provider, FieldTree};
use cdp_core::{CdpError, DEFAULT_LIMIT, MAX_LIMIT};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{canonical, ApiError, AppState, Caller};

type St = State<Arc<AppState>>;
type Res = Result<Response, ApiError>;
type Params = Query<HashMap<String, String>>;

fn ok<T: Serialize + ?Sized>(value: &T) -> Res {
    Ok(canonical(StatusCode::OK, value))
}

fn created<T: Serialize + ?Sized>(value: &T) -> Res {
    Ok(canonical(StatusCode::CREATED, value))
}

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError(CdpError::BadRequest(msg.into()))
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| bad(format!("request body: {e}")))
}

fn param<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError> {
    match q.get(name) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| bad(format!("query parameter {name}: cannot parse {v:?}"))),
    }
}

#[derive(Serialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
}

fn window(q: &HashMap<String, String>) -> Result<(usize, usize), ApiError> {
    let offset = param(q, "offset")?.unwrap_or(0);
    let limit: usize = param(q, "limit")?.unwrap_or(DEFAULT_LIMIT);
    if limit == 0 {
        return Err(bad("limit must be at least 1"));
    }
    Ok((offset, limit.min(MAX_LIMIT)))
}

fn page<T: Serialize>(items: Vec<T>, q: &HashMap<String, String>) -> Res {
    let (offset, limit) = window(q)?;
    let total = items.len();
    ok(&Page {
        items: items.into_iter().skip(offset).take(limit).collect(),
        offset,
        limit,
        total,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Registration {
    username: String,
    password: String,
    role: String,
    #[serde(default)]
    profile: FieldTree,
}

pub async fn register(State(st): St, bytes: Bytes) -> Res {
    let r: Registration = body(&bytes)?;
    let role: Role = serde_json::from_value(serde_json::Value::String(r.role.clone())).map_err(|_| bad(format!("unknown role {:?}", r.role)))?;
    let user = st.write().register(&r.username, &r.password, role, r.profile)?;
    created(&user)
}

#[derive(Deserialize)]
struct Login {
    username: String,
    password: String,
}

pub async fn login(State(st): St, bytes: Bytes) -> Res {
    let creds: Login = serde_json::from_slice(&bytes).map_err(|_| ApiError(CdpError::Unauthorized))?;
    let actor = st.read().authenticate(&creds.username, &creds.password)?;
    let now = st.clock.now();
    ok(&st.tokens().issue(&actor, now))
}

#[derive(Deserialize)]
struct Refresh {
    refresh_token: String,
}

pub async fn refresh(State(st): St, bytes: Bytes) -> Res {
    let r: Refresh = body(&bytes)?;
    let now = st.clock.now();
    let user_id = st.tokens().consume_refresh(&r.refresh_token, now)?;
    let actor = st.read().actor(&user_id).ok_or(CdpError::Unauthorized)?;
    ok(&st.tokens().issue(&actor, now))
}

pub async fn me(Caller(a): Caller, State(st): St) -> Res {
    ok(&st.read().user_view(&a)?)
}

pub async fn researcher_request(Caller(a): Caller, State(st): St, Path(id): Path<String>) -> Res {
    ok(&st.write().request_researcher(&a, &id)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: Decision,
}

pub async fn researcher_decision(Caller(a): Caller, State(st): St, Path(id): Path<String>, bytes: Bytes) -> Res {
    let d: DecisionBody = body(&bytes)?;
    ok(&st.write().resolve_researcher(&a, &id, d.decision)?)
}

pub async fn list_forms(Caller(a): Caller, State(st): St, Query(q): Params) -> Res {
    let forms = st.read().forms(&a)?;
    page(forms, &q)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewForm {
    title: String,
    questions: Vec<Question>,
}

pub async fn create_form(Caller(a): Caller, State(st): St, bytes: Bytes) -> Res {
    let f: NewForm = body(&bytes)?;
    created(&st.write().create_form(&a, &f.title, f.questions)?)
}

pub async fn get_form(Caller(a): Caller, State(st): St, Path(id): Path<String>) -> Res {
    ok(&st.read().form(&a, &id)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAssignment {
    patient_id: String,
    recurrence: Recurrence,
}

pub async fn assign_form(Caller(a): Caller, State(st): St, Path(id): Path<String>, bytes: Bytes) -> Res {
    let n: NewAssignment = body(&bytes)?;
    created(&st.write().assign_form(&a, &id, &n.patient_id, n.recurrence)?)
}

pub async fn list_assignments(Caller(a): Caller, State(st): St, Path(id): Path<String>, Query(q): Params) -> Res {
    let items = st.read().assignments(&a, &id)?;
    page(items, &q)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    answers: FieldTree,
}

#[derive(Serialize)]
struct Submitted {
    submitted: cdp_core::hospital::FormAssignment,
    #[serde(skip_serializing_if = "Option::is_none")]
    next: Option<cdp_core::hospital::FormAssignment>,
}

pub async fn submit_assignment(Caller(a): Caller, State(st): St, Path(id): Path<String>, bytes: Bytes) -> Res {
    let s: Submission = body(&bytes)?;
    let (submitted, next) = st.write().submit_assignment(&a, &id, s.answers)?;
    ok(&Submitted { submitted, next })
}

pub async fn list_treatments(Caller(a): Caller, State(st): St, Path(id): Path<String>, Query(q): Params) -> Res {
    let items = st.read().treatments(&a, &id)?;
    page(items, &q)
}

pub async fn submit_treatment(Caller(a): Caller, State(st): St, Path(id): Path<String>, bytes: Bytes) -> Res {
    let input: TreatmentInput = body(&bytes)?;
    created(&st.write().submit_treatment(&a, &id, input)?)
}

pub async fn list_cases(Caller(a): Caller, State(st): St, Query(q): Params) -> Res {
    let items = st.read().cases(&a)?;
    page(items, &q)
}

pub async fn get_case(Caller(a): Caller, State(st): St, Path(id): Path<String>) -> Res {
    ok(&st.read().case_view(&a, &id)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAnnotation {
    text: String,
}

pub async fn annotate(Caller(a): Caller, State(st): St, Path(id): Path<String>, bytes: Bytes) -> Res {
    let n: NewAnnotation = body(&bytes)?;
    created(&st.write().annotate(&a, &id, &n.text)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DoctorBody {
    doctor_id: String,
}

pub async fn assign_doctor(Caller(a): Caller, State(st): St, Path(id): Path<String>, bytes: Bytes) -> Res {
    let d: DoctorBody = body(&bytes)?;
    ok(&st.write().assign_doctor(&a, &id, &d.doctor_id)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewPlan {
    formulation: String,
    #[serde(default)]
    dose: Option<Dose>,
    #[serde(default)]
    notes: String,
}

pub async fn plan_treatment(Caller(a): Caller, State(st): St, Path(id): Path<String>, bytes: Bytes) -> Res {
    let p: NewPlan = body(&bytes)?;
    created(&st.write().plan_treatment(&a, &id, &p.formulation, p.dose, &p.notes)?)
}

pub async fn remove_planned(Caller(a): Caller, State(st): St, Path((id, plan_id)): Path<(String, String)>) -> Res {
    ok(&st.write().remove_planned(&a, &id, &plan_id)?)
}

pub async fn research_cases(Caller(a): Caller, State(st): St, Query(q): Params) -> Res {
    let items = st.read().research_cases(&a)?;
    page(items, &q)
}

pub async fn search(Caller(_): Caller, State(st): St, Query(q): Params) -> Res {
    let query = q.get("q").ok_or_else(|| bad("missing query parameter q"))?;
    let (offset, limit) = window(&q)?;
    ok(&st.read().search(query, offset, limit)?)
}

pub async fn ingest(Caller(a): Caller, State(st): St, form: Result<Multipart, MultipartRejection>) -> Res {
    let mut form = form.map_err(|e| bad(e.body_text()))?;
    let (mut file, mut name, mut spec, mut provider) = (None, None, None, None);
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.body_text()))? {
        match field.name() {
            Some("file") => {
                name = field.file_name().map(str::to_owned);
                file = Some(field.bytes().await.map_err(|e| bad(e.body_text()))?);
            }
            Some("spec") => spec = Some(field.text().await.map_err(|e| bad(e.body_text()))?),
            Some("provider") => provider = Some(field.text().await.map_err(|e| bad(e.body_text()))?),
            Some(other) => return Err(bad(format!("unexpected form field {other:?}"))),
            None => return Err(bad("unnamed form field")),
        }
    }
    let file = file.ok_or_else(|| bad("missing form field file"))?;
    let spec = spec.filter(|s| !s.is_empty());
    let mut p = st.write();
    let provider = match provider {
        Some(p) => p,
        None => {
            let domain = match spec.as_deref().and_then(|s| p.config().mapping(s)) {
                Some(m) => m.target_sub_domain.to_string(),
                None if a.role == Role::Grower => "grower".into(),
                None => "research".into(),
            };
            format!("{domain}:{}", a.user_id)
        }
    };
    check_provider(&provider).map_err(|e| bad(e.to_string()))?;
    let doc = RawDocument::new(file.to_vec(), name, p.now(), provider);
    let report = p.ingest(&doc, spec.as_deref())?;
    ok(&report)
}

pub async fn similar(Caller(_): Caller, State(st): St, Path(sample_id): Path<String>, Query(q): Params) -> Res {
    let k = param(&q, "k")?.unwrap_or(10);
    let dataset = q.get("dataset").map(String::as_str);
    ok(&st.read().similar_strains(&sample_id, k, dataset)?)
}

pub async fn consistency(Caller(_): Caller, State(st): St, Query(q): Params) -> Res {
    ok(&st.read().strain_consistency(q.get("dataset").map(String::as_str))?)
}

pub async fn alerts(Caller(a): Caller, State(st): St, Query(q): Params) -> Res {
    let items = st.write().take_alerts(&a)?;
    page(items, &q)
}

pub async fn subscribe(Caller(a): Caller, State(st): St, bytes: Bytes) -> Res {
    let topic: Topic = body(&bytes)?;
    created(&st.write().subscribe(&a, topic)?)
}
