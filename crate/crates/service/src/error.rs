use std::fmt::Display;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use bayes_arena::{LearnError, SimError};
use serde_json::json;

/// An HTTP error with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Display) -> Self {
        Self {
            status,
            code,
            message: message.to_string(),
        }
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session `{id}`"))
    }

    pub fn bad_scenario(message: impl Display) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "BadScenario", message)
    }

    pub fn internal(message: impl Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub(crate) fn from_step(e: SimError) -> Self {
        match e {
            SimError::Finished => Self::new(StatusCode::GONE, "SessionFinished", e),
            SimError::IllegalAction { .. } => Self::new(StatusCode::CONFLICT, "IllegalAction", e),
            other => Self::internal(other),
        }
    }

    pub(crate) fn from_learn(e: LearnError) -> Self {
        match e {
            LearnError::NoData => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "NoData", e),
            LearnError::MalformedLog(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "MalformedLog", e),
            LearnError::InvalidArgument(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidArgument", e),
            other => Self::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}
