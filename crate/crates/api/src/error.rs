use artherapist_core::domain::ValidationError;
use artherapist_core::engine::{EngineError, ReplayError};
use artherapist_core::simulator::SimError;
use artherapist_store::StoreError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Error codes returned by the API. The set is closed; each code always
/// comes with the same status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    ValidationFailed,
    MalformedRequest,
    MissingDoctorId,
    DuplicateId,
    VersionConflict,
    PreconditionRequired,
    NotFound,
    SeqConflict,
    SessionNotSealed,
    Forbidden,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 11] = [
        ErrorCode::ValidationFailed,
        ErrorCode::MalformedRequest,
        ErrorCode::MissingDoctorId,
        ErrorCode::DuplicateId,
        ErrorCode::VersionConflict,
        ErrorCode::PreconditionRequired,
        ErrorCode::NotFound,
        ErrorCode::SeqConflict,
        ErrorCode::SessionNotSealed,
        ErrorCode::Forbidden,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::ValidationFailed | ErrorCode::MalformedRequest | ErrorCode::MissingDoctorId => {
                StatusCode::BAD_REQUEST
            }
            ErrorCode::DuplicateId | ErrorCode::SeqConflict | ErrorCode::SessionNotSealed => StatusCode::CONFLICT,
            ErrorCode::VersionConflict => StatusCode::PRECONDITION_FAILED,
            ErrorCode::PreconditionRequired => StatusCode::PRECONDITION_REQUIRED,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Forbidden => StatusCode::FORBIDDEN,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[error("{code:?} ({status}): {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Vec<ValidationError>>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { status: code.status().as_u16(), code, message: message.into(), details: None }
    }

    pub fn validation(errors: Vec<ValidationError>) -> Self {
        let message = match errors.len() {
            1 => format!("1 invariant violated: {}", errors[0]),
            n => format!("{n} invariants violated"),
        };
        Self { details: Some(errors), ..Self::new(ErrorCode::ValidationFailed, message) }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::MalformedRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Forbidden, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::Validation(errors) => Self::validation(errors),
            StoreError::NotFound { .. } | StoreError::UnknownSession(_) => Self::not_found(msg),
            StoreError::Duplicate { .. } | StoreError::SessionExists(_) => Self::new(ErrorCode::DuplicateId, msg),
            StoreError::VersionConflict { .. } => Self::new(ErrorCode::VersionConflict, msg),
            StoreError::SeqGap { .. } | StoreError::Sealed(_) => Self::new(ErrorCode::SeqConflict, msg),
            StoreError::InvalidId(_) | StoreError::ForeignEvent { .. } | StoreError::Encode(_) => Self::malformed(msg),
            StoreError::Io(_)
            | StoreError::Json(_)
            | StoreError::Corrupt { .. }
            | StoreError::CorruptMeta { .. }
            | StoreError::CorruptDocument { .. }
            | StoreError::CorruptTransitions { .. } => Self::internal(msg),
        }
    }
}

impl From<ReplayError> for ApiError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::SeqGap { .. } | ReplayError::AfterTerminal { .. } | ReplayError::DuplicateStart { .. } => {
                Self::new(ErrorCode::SeqConflict, e.to_string())
            }
            _ => Self::malformed(e.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Replay(r) => r.into(),
            EngineError::InvalidConfig(_) => Self::new(ErrorCode::ValidationFailed, e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidParams(errors) => Self::validation(errors),
            SimError::Engine(e) => e.into(),
            other => Self::malformed(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
