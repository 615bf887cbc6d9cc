use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pb_core::{StoreError, TallyError};
use serde_json::{json, Value};

/// Transport-level failure: a status plus a JSON body carrying `code`,
/// `message` and any structured detail.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "code": code, "message": message.into() }),
        }
    }

    pub fn with(mut self, key: &str, value: impl serde::Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).unwrap_or(Value::Null);
        self
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "a valid admin bearer token is required",
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let message = err.to_string();
        match err {
            StoreError::UnknownElection(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
            }
            StoreError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", message),
            StoreError::ElectionClosed(_) => {
                ApiError::new(StatusCode::CONFLICT, "election_closed", message)
            }
            StoreError::InvalidConfig(violations) => {
                let detail: Vec<Value> = violations
                    .iter()
                    .map(|v| {
                        let mut entry = serde_json::to_value(v).unwrap_or(Value::Null);
                        entry["field"] = json!(v.field());
                        entry["message"] = json!(v.to_string());
                        entry
                    })
                    .collect();
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", "invalid election config")
                    .with("violations", detail)
            }
            StoreError::ValidationFailed(violations) => {
                let detail: Vec<Value> = violations
                    .iter()
                    .map(|v| {
                        let mut entry = serde_json::to_value(v).unwrap_or(Value::Null);
                        entry["message"] = json!(v.to_string());
                        entry
                    })
                    .collect();
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "validation_failed",
                    "the ballot cannot be submitted",
                )
                .with("violations", detail)
            }
            StoreError::CorruptLog { .. } | StoreError::Storage(_) => {
                log::error!("{message}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", message)
            }
        }
    }
}

impl From<TallyError> for ApiError {
    fn from(err: TallyError) -> Self {
        match err {
            TallyError::InstanceTooLarge { work, bound } => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "instance_too_large",
                err.to_string(),
            )
            .with("work", work)
            .with("bound", bound),
            other => ApiError::internal(other.to_string()),
        }
    }
}
