//! Which roles may call which endpoint. Anything not listed is denied.

use cdp_core::hospital::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Public,
    Roles(&'static [Role]),
}

#[derive(Clone, Copy, Debug)]
pub struct Endpoint {
    pub method: &'static str,
    pub path: &'static str,
    pub access: Access,
}

use Role::{Admin, Doctor, Grower, Patient, Researcher};

const ANY_USER: &[Role] = &[Patient, Doctor, Grower, Researcher, Admin];
const SUBSCRIBERS: &[Role] = &[Patient, Doctor, Grower, Researcher];
const STRAIN_READERS: &[Role] = &[Grower, Researcher];

const fn ep(method: &'static str, path: &'static str, access: Access) -> Endpoint {
    Endpoint { method, path, access }
}

const fn roles(r: &'static [Role]) -> Access {
    Access::Roles(r)
}

/// Methods the router distinguishes; every other method on a known path
/// is denied like an unlisted pair.
pub const METHODS: [&str; 5] = ["GET", "POST", "PUT", "PATCH", "DELETE"];

pub const ENDPOINTS: &[Endpoint] = &[
    ep("POST", "/auth/register", Access::Public),
    ep("POST", "/auth/login", Access::Public),
    ep("POST", "/auth/refresh", Access::Public),
    ep("GET", "/users/me", roles(ANY_USER)),
    ep("POST", "/users/{id}/researcher-request", roles(&[Patient, Doctor])),
    ep("POST", "/users/{id}/researcher-decision", roles(&[Admin])),
    ep("GET", "/forms", roles(&[Doctor])),
    ep("POST", "/forms", roles(&[Doctor])),
    ep("GET", "/forms/{id}", roles(&[Doctor, Patient])),
    ep("POST", "/forms/{id}/assignments", roles(&[Doctor])),
    ep("GET", "/patients/{id}/assignments", roles(&[Patient, Doctor])),
    ep("POST", "/assignments/{id}/submission", roles(&[Patient])),
    ep("GET", "/patients/{id}/treatments", roles(&[Patient, Doctor])),
    ep("POST", "/patients/{id}/treatments", roles(&[Patient])),
    ep("GET", "/cases", roles(&[Doctor, Admin])),
    ep("GET", "/cases/{id}", roles(&[Doctor])),
    ep("POST", "/cases/{id}/annotations", roles(&[Doctor])),
    ep("POST", "/cases/{id}/doctors", roles(&[Admin])),
    ep("POST", "/cases/{id}/planned-treatments", roles(&[Doctor])),
    ep("DELETE", "/cases/{id}/planned-treatments/{plan_id}", roles(&[Doctor])),
    ep("GET", "/research/cases", roles(&[Researcher])),
    ep("GET", "/search", roles(&[Researcher])),
    ep("POST", "/ingest", roles(&[Grower, Researcher, Admin])),
    ep("GET", "/strains/{sample_id}/similar", roles(STRAIN_READERS)),
    ep("GET", "/strains/consistency", roles(STRAIN_READERS)),
    ep("GET", "/alerts", roles(SUBSCRIBERS)),
    ep("POST", "/subscriptions", roles(SUBSCRIBERS)),
];

pub fn lookup(method: &str, path: &str) -> Option<Access> {
    ENDPOINTS.iter().find(|e| e.method == method && e.path == path).map(|e| e.access)
}

/// Deny by default: unknown pairs and public endpoints grant no role
/// anything beyond what is listed.
pub fn allows(role: Role, method: &str, path: &str) -> bool {
    match lookup(method, path) {
        Some(Access::Public) => true,
        Some(Access::Roles(r)) => r.contains(&role),
        None => false,
    }
}

/// Distinct path templates, in table order.
pub fn paths() -> Vec<&'static str> {
    let mut out: Vec<&str> = Vec::new();
    for e in ENDPOINTS {
        if !out.contains(&e.path) {
            out.push(e.path);
        }
    }
    out
}
