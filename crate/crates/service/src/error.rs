use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use vdgpt_client::api::ApiError;
use vdgpt_core::layout::LayoutError;
use vdgpt_core::plan::PlanError;
use vdgpt_core::planner::PlannerError;
use vdgpt_grounding::GroundingError;

/// An error response: status plus the JSON error body.
#[derive(Debug)]
pub struct HttpError {
    pub status: StatusCode,
    pub body: ApiError,
}

impl HttpError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                code: code.to_string(),
                message: message.into(),
                current_version: None,
            },
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("unknown {what} {id:?}"))
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn conflict(current: u64) -> Self {
        let mut e = Self::new(
            StatusCode::CONFLICT,
            "VERSION_CONFLICT",
            format!("stored version is {current}"),
        );
        e.body.current_version = Some(current);
        e
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<std::io::Error> for HttpError {
    fn from(e: std::io::Error) -> Self {
        Self::internal(e.to_string())
    }
}

impl From<PlanError> for HttpError {
    fn from(e: PlanError) -> Self {
        Self::bad_request(e.code(), e.to_string())
    }
}

impl From<GroundingError> for HttpError {
    fn from(e: GroundingError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

impl From<PlannerError> for HttpError {
    fn from(e: PlannerError) -> Self {
        let status = match e {
            PlannerError::Backend(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<LayoutError> for HttpError {
    fn from(e: LayoutError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}
