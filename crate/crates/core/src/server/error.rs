use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

use crate::aggregation::AggregationError;
use crate::correlation::CorrelationError;
use crate::fairness::FairnessError;
use crate::slicing::MetricsError;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn unknown_run(run: &str) -> Self {
        Self::not_found("UNKNOWN_RUN", format!("no run named {run:?}")).with_detail(serde_json::json!({ "run": run }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<AggregationError> for ApiError {
    fn from(e: AggregationError) -> Self {
        let status = match e {
            AggregationError::UnknownColumn { .. } => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        let detail = match &e {
            AggregationError::UnknownColumn { run, tag } => Some(serde_json::json!({ "run": run, "tag": tag })),
            _ => None,
        };
        Self {
            status,
            code: e.code().into(),
            message: e.to_string(),
            detail,
        }
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        Self::bad_request(e.code(), e.to_string())
    }
}

impl From<FairnessError> for ApiError {
    fn from(e: FairnessError) -> Self {
        Self::bad_request(e.code(), e.to_string())
    }
}

impl From<CorrelationError> for ApiError {
    fn from(e: CorrelationError) -> Self {
        match e {
            CorrelationError::Aggregation(inner) => inner.into(),
            other => Self::bad_request(other.code(), other.to_string()),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request("BAD_REQUEST", e.body_text())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request("BAD_REQUEST", e.body_text())
    }
}
