use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use kneelink_core::session::SessionError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session {0}")]
    NotFound(String),
    #[error("session {0} is already taking data")]
    SessionActive(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("ingest loop is not running")]
    Unavailable,
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::SessionActive(_) => "session_active",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Unavailable => "unavailable",
            ServiceError::Session(e) => e.code(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::SessionActive(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Session(e) => match e {
                SessionError::State { .. } | SessionError::InsufficientData { .. } => StatusCode::CONFLICT,
                SessionError::Metadata(_) | SessionError::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
                SessionError::SuspectPacket { .. } | SessionError::Emg(_) | SessionError::Calibration(_) => {
                    StatusCode::UNPROCESSABLE_ENTITY
                }
                SessionError::Io(_) | SessionError::Csv(_) | SessionError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
        }
    }
}

/// JSON error body: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code().to_string(),
                message: self.to_string(),
            },
        };
        (self.status(), Json(body)).into_response()
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;
