use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

use jade_api::{ConfigDiagnostic, ErrorBody};
use jade_core::env::{EnvError, LogError};
use jade_core::scenarios::generate::GenerateError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("config is invalid")]
    Config(Vec<ConfigDiagnostic>),
    #[error("no run with id {0}")]
    NoRun(u64),
    #[error("run {0} has not finished")]
    NotFinished(u64),
    #[error("log was written for config digest {log}, this config has {config}")]
    DigestMismatch { log: String, config: String },
    #[error("bad log: {0}")]
    Log(#[from] LogError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl From<EnvError> for ApiError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(d) => ApiError::Config(d),
            EnvError::DigestMismatch { log, config } => ApiError::DigestMismatch { log, config },
            EnvError::Log(e) => ApiError::Log(e),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::NoRun(_) => StatusCode::NOT_FOUND,
            ApiError::NotFinished(_) | ApiError::DigestMismatch { .. } => StatusCode::CONFLICT,
            ApiError::Log(_) | ApiError::Generate(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = ErrorBody {
            error: self.to_string(),
            diagnostics: match self {
                ApiError::Config(d) => d,
                _ => Vec::new(),
            },
        };
        (status, Json(body)).into_response()
    }
}
