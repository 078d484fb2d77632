use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    BadGateway(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadGateway(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<sgt_core::Error> for ApiError {
    fn from(e: sgt_core::Error) -> Self {
        use sgt_core::Error as E;
        let msg = e.to_string();
        match e {
            E::EmptyText => ApiError::BadRequest(msg),
            E::TtsUnavailable(_) | E::AlignerUnavailable(_) => ApiError::BadGateway(msg),
            E::UnknownGesture(_) => ApiError::NotFound(msg),
            E::ModelNotLoaded => ApiError::Conflict(msg),
            E::InvalidSpeedLevel(_)
            | E::InvalidControls(_)
            | E::RangeOutOfBounds { .. }
            | E::LengthMismatch { .. }
            | E::DegeneratePose { .. }
            | E::DuplicateKeyIndex(_)
            | E::IndexOutOfRange { .. }
            | E::InvalidMotion(_)
            | E::SequenceTooShort { .. } => ApiError::Unprocessable(msg),
            _ => ApiError::Internal(msg),
        }
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, ApiError::Internal(_)) {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}
