use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;
use topicfield::{FieldError, LayoutError, ModelError};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("version conflict: expected {expected}, current {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Conflict { .. } => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.to_string() }));
        (self.status(), body).into_response()
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::UnknownDocument(_) | ModelError::TopicOutOfRange { .. } => ApiError::NotFound(e.to_string()),
            ModelError::Io { .. } => ApiError::Internal(e.to_string()),
            _ => ApiError::BadRequest(e.to_string()),
        }
    }
}

impl From<FieldError> for ApiError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::UnknownDocument(_) => ApiError::NotFound(e.to_string()),
            FieldError::NonFinite(_) => ApiError::Unprocessable(e.to_string()),
            FieldError::Model(m) => m.into(),
            FieldError::Corpus(c) => ApiError::NotFound(c.to_string()),
            FieldError::NotInField(_) | FieldError::AutoTopicsEnabled | FieldError::ZeroTopicCount => {
                ApiError::BadRequest(e.to_string())
            }
        }
    }
}

impl From<LayoutError> for ApiError {
    fn from(e: LayoutError) -> Self {
        match e {
            LayoutError::InvalidParams(_) => ApiError::BadRequest(e.to_string()),
            LayoutError::NonFinite { .. } | LayoutError::NonFiniteMagnet(_) => ApiError::Unprocessable(e.to_string()),
            LayoutError::Model(m) => m.into(),
            LayoutError::NoMagnets => ApiError::BadRequest(e.to_string()),
        }
    }
}
