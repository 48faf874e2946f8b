use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pps_ledger::LedgerError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// The JSON body of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error_code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub envelope: ErrorEnvelope,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            envelope: ErrorEnvelope {
                error_code: code.to_string(),
                message: message.into(),
                details: None,
            },
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.envelope.details = Some(details);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::NotFound { .. } => ApiError::not_found(e.to_string()),
            LedgerError::Conflict {
                ref message,
                ref existing_id,
            } => {
                let err = ApiError::new(StatusCode::CONFLICT, "conflict", message.clone());
                match existing_id {
                    Some(id) => err.with_details(serde_json::json!({ "existing_id": id })),
                    None => err,
                }
            }
            LedgerError::Invalid(message) => ApiError::bad_request(message),
            LedgerError::Io(_) | LedgerError::Corrupt { .. } => {
                log::error!("ledger failure: {e}");
                ApiError::internal("the ledger could not complete the request")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.envelope)).into_response()
    }
}
