use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use roadreg_core::events::EventError;
use roadreg_core::ingestion::IngestError;
use roadreg_core::regression::RegressionError;
use serde::Serialize;

use crate::store::StoreError;

/// One machine-readable problem in an error response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorItem {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

impl ErrorItem {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
            file: None,
            line: None,
        }
    }
}

impl From<&IngestError> for ErrorItem {
    fn from(e: &IngestError) -> Self {
        let message = match e {
            IngestError::InFile { source, .. } => source.to_string(),
            other => other.to_string(),
        };
        Self {
            code: e.code().to_string(),
            message,
            file: e.file().map(str::to_string),
            line: e.line(),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub errors: Vec<ErrorItem>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    errors: &'a [ErrorItem],
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            errors: vec![ErrorItem::new(code, message)],
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn ingest(errors: &[IngestError]) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            errors: errors.iter().map(ErrorItem::from).collect(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                errors: &self.errors,
            }),
        )
            .into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::NotFound { kind, .. } => {
                let code = if *kind == "dataset" {
                    "UnknownDataset"
                } else {
                    "UnknownModel"
                };
                ApiError::new(StatusCode::NOT_FOUND, code, e.to_string())
            }
            StoreError::Ingest(inner) => ApiError::ingest(std::slice::from_ref(inner)),
            _ => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "StoreError",
                e.to_string(),
            ),
        }
    }
}

impl From<RegressionError> for ApiError {
    fn from(e: RegressionError) -> Self {
        let status = match e {
            RegressionError::RankDeficient(_)
            | RegressionError::TooFewRows { .. }
            | RegressionError::EmptyDesign
            | RegressionError::NumericalInstability(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<EventError> for ApiError {
    fn from(e: EventError) -> Self {
        ApiError::bad_request(e.code(), e.to_string())
    }
}
