use crate::capture::CaptureError;
use crate::config::ConfigError;
use crate::hospital::{PolicyError, ResearcherRequest};
use crate::model::ModelError;
use crate::pipeline::{PipelineError, ReplayError};
use crate::processing::RuleError;
use crate::quality::ValidationIssue;
use crate::store::StoreError;
use crate::strain::StrainError;

/// Every failure the platform reports to a caller.
#[derive(Debug, thiserror::Error)]
pub enum CdpError {
    #[error("invalid credentials")]
    Unauthorized,
    #[error("access token expired")]
    TokenExpired,
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("username {0:?} is taken")]
    DuplicateUsername(String),
    #[error("password must be at least 10 characters")]
    WeakPassword,
    #[error("role {0} cannot be requested at registration")]
    RoleNotGrantable(String),
    #[error("invalid transition {from:?} -> {to:?}")]
    InvalidTransition { from: String, to: String },
    #[error("annotation text is empty")]
    EmptyAnnotation,
    #[error("validation failed with {} issue(s)", .0.len())]
    ValidationFailed(Vec<ValidationIssue>),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("pseudonym key is not configured")]
    KeyMissing,
    #[error(transparent)]
    Strain(#[from] StrainError),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<StoreError> for CdpError {
    fn from(e: StoreError) -> Self {
        CdpError::Store(e)
    }
}

impl From<PipelineError> for CdpError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Store(s) => CdpError::Store(s),
            other => CdpError::Pipeline(other),
        }
    }
}

impl From<RuleError> for CdpError {
    fn from(e: RuleError) -> Self {
        CdpError::Pipeline(PipelineError::Rule(e))
    }
}

impl From<PolicyError> for CdpError {
    fn from(e: PolicyError) -> Self {
        CdpError::Pipeline(PipelineError::Policy(e))
    }
}

/// Broad class of an error, used for HTTP statuses and exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Unauthenticated,
    Forbidden,
    NotFound,
    Conflict,
    Invalid,
    Unavailable,
    Io,
    Internal,
}

impl CdpError {
    pub fn transition(from: ResearcherRequest, to: ResearcherRequest) -> Self {
        let name = |r: ResearcherRequest| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        CdpError::InvalidTransition { from: name(from), to: name(to) }
    }

    /// Stable snake_case identifier, the `error` field of API bodies.
    pub fn code(&self) -> &'static str {
        match self {
            CdpError::Unauthorized => "unauthorized",
            CdpError::TokenExpired => "token_expired",
            CdpError::Forbidden(_) => "forbidden",
            CdpError::NotFound(_) => "not_found",
            CdpError::UnknownPatient(_) => "unknown_patient",
            CdpError::DuplicateUsername(_) => "duplicate_username",
            CdpError::WeakPassword => "weak_password",
            CdpError::RoleNotGrantable(_) => "role_not_grantable",
            CdpError::InvalidTransition { .. } => "invalid_transition",
            CdpError::EmptyAnnotation => "empty_annotation",
            CdpError::ValidationFailed(_) => "validation_failed",
            CdpError::BadRequest(_) => "bad_request",
            CdpError::KeyMissing => "pseudonym_key_missing",
            CdpError::Strain(StrainError::DimensionMismatch { .. }) => "dimension_mismatch",
            CdpError::Strain(StrainError::UnknownSample(_)) => "unknown_sample",
            CdpError::Strain(_) => "strain_error",
            CdpError::Pipeline(PipelineError::UnknownDataset(_)) => "unknown_dataset",
            CdpError::Pipeline(PipelineError::UnknownSchema(_)) => "unknown_schema",
            CdpError::Pipeline(PipelineError::IndexMissing) => "index_missing",
            CdpError::Pipeline(PipelineError::Rule(_)) => "rule_error",
            CdpError::Pipeline(PipelineError::Policy(_)) => "policy_error",
            CdpError::Pipeline(_) => "pipeline_error",
            CdpError::Replay(_) => "replay_error",
            CdpError::Config(_) => "config_error",
            CdpError::Store(StoreError::Locked(_)) => "store_locked",
            CdpError::Store(_) => "store_error",
            CdpError::Capture(_) => "capture_error",
            CdpError::Model(_) => "model_error",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            CdpError::Unauthorized | CdpError::TokenExpired => Unauthenticated,
            CdpError::Forbidden(_) => Forbidden,
            CdpError::NotFound(_) | CdpError::UnknownPatient(_) | CdpError::Strain(StrainError::UnknownSample(_)) => NotFound,
            CdpError::Pipeline(PipelineError::UnknownDataset(_)) | CdpError::Pipeline(PipelineError::IndexMissing) => NotFound,
            CdpError::DuplicateUsername(_) | CdpError::InvalidTransition { .. } => Conflict,
            CdpError::KeyMissing => Unavailable,
            CdpError::Store(StoreError::Io { .. }) => Io,
            CdpError::Store(StoreError::Corrupt { .. }) | CdpError::Pipeline(PipelineError::Artifact { .. }) => Internal,
            CdpError::Store(StoreError::Locked(_)) | CdpError::Store(StoreError::ReadOnly) => Unavailable,
            _ => Invalid,
        }
    }
}
