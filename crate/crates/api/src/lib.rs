//! HTTP API over a [`Platform`], with bearer tokens and a role matrix.

mod auth;
mod handlers;
pub mod policy;

use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::{FromRequestParts, MatchedPath};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use cdp_core::clock::Clock;
use cdp_core::hospital::Actor;
use cdp_core::model::canonical_json;
use cdp_core::{CdpError, ErrorClass, Platform};
use serde::Serialize;

pub use auth::{TokenPair, ACCESS_TTL_SECS, REFRESH_TTL_SECS};

pub struct AppState {
    platform: RwLock<Platform>,
    tokens: Mutex<auth::Tokens>,
    clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(platform: Platform, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(AppState {
            platform: RwLock::new(platform),
            tokens: Mutex::new(auth::Tokens::default()),
            clock,
        })
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Platform> {
        self.platform.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Platform> {
        self.platform.write().unwrap_or_else(|e| e.into_inner())
    }

    fn tokens(&self) -> std::sync::MutexGuard<'_, auth::Tokens> {
        self.tokens.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Resolves a bearer header to the caller's live identity.
    fn caller(&self, parts: &Parts) -> Result<Actor, CdpError> {
        let header = parts.headers.get(AUTHORIZATION).and_then(|v| v.to_str().ok());
        let token = header.and_then(|h| h.strip_prefix("Bearer ")).ok_or(CdpError::Unauthorized)?;
        let user_id = self.tokens().subject(token.trim(), self.clock.now())?;
        self.read().actor(&user_id).ok_or(CdpError::Unauthorized)
    }
}

/// Error response: `{"error": code, "detail": message}`, plus `issues` for
/// validation failures.
pub struct ApiError(pub CdpError);

impl From<CdpError> for ApiError {
    fn from(e: CdpError) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &CdpError) -> StatusCode {
    if matches!(e, CdpError::ValidationFailed(_)) {
        return StatusCode::UNPROCESSABLE_ENTITY;
    }
    match e.class() {
        ErrorClass::Unauthenticated => StatusCode::UNAUTHORIZED,
        ErrorClass::Forbidden => StatusCode::FORBIDDEN,
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Conflict => StatusCode::CONFLICT,
        ErrorClass::Invalid => StatusCode::BAD_REQUEST,
        ErrorClass::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
        ErrorClass::Io | ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    issues: Option<&'a [cdp_core::quality::ValidationIssue]>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let issues = match &self.0 {
            CdpError::ValidationFailed(i) => Some(i.as_slice()),
            _ => None,
        };
        let body = ErrorBody {
            error: self.0.code(),
            detail: self.0.to_string(),
            issues,
        };
        canonical(status, &body)
    }
}

/// A response in canonical JSON.
pub fn canonical<T: Serialize + ?Sized>(status: StatusCode, value: &T) -> Response {
    (status, [(CONTENT_TYPE, "application/json")], canonical_json(value)).into_response()
}

/// The authorized caller of a protected endpoint. Extraction applies the
/// role matrix to the matched route; handlers add ownership and case
/// assignment checks through the platform.
pub struct Caller(pub Actor);

impl FromRequestParts<Arc<AppState>> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, Self::Rejection> {
        let actor = state.caller(parts)?;
        let path = parts.extensions.get::<MatchedPath>().map(|m| m.as_str().to_owned()).unwrap_or_default();
        if policy::allows(actor.role, parts.method.as_str(), &path) {
            Ok(Caller(actor))
        } else {
            Err(ApiError(CdpError::Forbidden(format!("{} may not {} {path}", actor.role, parts.method))))
        }
    }
}

/// Unlisted methods on known paths: 401 without a valid token, else 403.
async fn denied(_: Caller) -> ApiError {
    ApiError(CdpError::Forbidden("method not allowed".into()))
}

pub fn router(state: Arc<AppState>) -> Router {
    use handlers::*;
    Router::new()
        .route("/auth/register", post(register).fallback(denied))
        .route("/auth/login", post(login).fallback(denied))
        .route("/auth/refresh", post(refresh).fallback(denied))
        .route("/users/me", get(me).fallback(denied))
        .route("/users/{id}/researcher-request", post(researcher_request).fallback(denied))
        .route("/users/{id}/researcher-decision", post(researcher_decision).fallback(denied))
        .route("/forms", get(list_forms).post(create_form).fallback(denied))
        .route("/forms/{id}", get(get_form).fallback(denied))
        .route("/forms/{id}/assignments", post(assign_form).fallback(denied))
        .route("/patients/{id}/assignments", get(list_assignments).fallback(denied))
        .route("/assignments/{id}/submission", post(submit_assignment).fallback(denied))
        .route("/patients/{id}/treatments", get(list_treatments).post(submit_treatment).fallback(denied))
        .route("/cases", get(list_cases).fallback(denied))
        .route("/cases/{id}", get(get_case).fallback(denied))
        .route("/cases/{id}/annotations", post(annotate).fallback(denied))
        .route("/cases/{id}/doctors", post(assign_doctor).fallback(denied))
        .route("/cases/{id}/planned-treatments", post(plan_treatment).fallback(denied))
        .route("/cases/{id}/planned-treatments/{plan_id}", delete(remove_planned).fallback(denied))
        .route("/research/cases", get(research_cases).fallback(denied))
        .route("/search", get(search).fallback(denied))
        .route("/ingest", post(ingest).fallback(denied))
        .route("/strains/{sample_id}/similar", get(similar).fallback(denied))
        .route("/strains/consistency", get(consistency).fallback(denied))
        .route("/alerts", get(alerts).fallback(denied))
        .route("/subscriptions", post(subscribe).fallback(denied))
        .fallback(not_found)
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError(CdpError::NotFound("no such endpoint".into()))
}

pub async fn serve(state: Arc<AppState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}
