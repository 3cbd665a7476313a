use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ppa_core::memory::MemoryError;
use ppa_core::pipeline::PipelineError;
use serde::Serialize;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub retryable: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("{0}")]
    Conflict(String),
    #[error("the gold query type needs a reference response, which live sessions do not have")]
    GoldRejected,
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("storage failure: {0}")]
    Storage(#[from] MemoryError),
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::SessionClosed(_) | Self::Conflict(_) => StatusCode::CONFLICT,
            Self::GoldRejected | Self::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            Self::Pipeline(e) if e.is_transient() => StatusCode::SERVICE_UNAVAILABLE,
            Self::Pipeline(PipelineError::Provider { .. }) => StatusCode::BAD_GATEWAY,
            Self::Pipeline(PipelineError::Config(_)) => StatusCode::BAD_REQUEST,
            Self::Pipeline(_) | Self::Storage(_) | Self::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::NotFound(_) => "not_found",
            Self::SessionClosed(_) => "session_closed",
            Self::Conflict(_) => "conflict",
            Self::GoldRejected => "gold_rejected",
            Self::InvalidRequest(_) | Self::Pipeline(PipelineError::Config(_)) => "invalid_request",
            Self::Pipeline(PipelineError::Provider { .. }) => "provider_failure",
            Self::Pipeline(_) => "pipeline_failure",
            Self::Storage(_) | Self::Io(_) => "storage_failure",
        }
    }

    pub fn retryable(&self) -> bool {
        match self {
            Self::Pipeline(e) => e.is_transient(),
            Self::Storage(MemoryError::Provider(e)) => e.is_transient(),
            Self::Io(_) => true,
            _ => false,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code(),
            message: self.to_string(),
            retryable: self.retryable(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            tracing::warn!(error = %self, "request failed");
        }
        (self.status(), Json(self.body())).into_response()
    }
}
