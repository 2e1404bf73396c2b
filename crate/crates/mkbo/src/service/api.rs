//! Request and response bodies, and the JSON error envelope.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use mkbo_core::bo::{AcquisitionKind, Goal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{HyperGrids, MixtureGrids, PretrainGrids, Strategy};
use crate::strategy::KernelProvenance;

fn default_delta() -> f64 {
    mkbo_core::bo::acquisition::DEFAULT_DELTA
}

fn default_strategy() -> Strategy {
    Strategy::PlainSe
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxRequest {
    /// Ring benchmark aux data (2-D only).
    Generator {
        count: usize,
        seed: u64,
    },
    Inline {
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
    },
    /// Id returned by `POST /v1/datasets`.
    Upload(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub dimension: usize,
    pub bounds: Vec<[f64; 2]>,
    pub resolution: Vec<usize>,
    pub acquisition: AcquisitionKind,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub goal: Goal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<AuxRequest>,
    /// Observations conditioned on before the first suggestion.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<Observation>,
    #[serde(default)]
    pub hypers: HyperGrids,
    #[serde(default)]
    pub pretrain: PretrainGrids,
    #[serde(default)]
    pub mixture: MixtureGrids,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    ReadyToSuggest,
    AwaitingObservation,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAt {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionResponse {
    pub t: usize,
    pub x: Vec<f64>,
    pub acquisition_value: f64,
    pub model: ModelAt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationResponse {
    pub t: usize,
    pub best_so_far: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseSummary {
    pub status: Status,
    pub iterations: usize,
    pub observations: usize,
    pub best_so_far: Option<f64>,
    pub best_x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedResponse {
    pub id: String,
    pub status: Status,
    pub kernel: KernelProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub created_at_ms: u64,
    pub status: Status,
    /// Completed iterations (trace rows).
    pub t: usize,
    pub observations: usize,
    pub candidates: usize,
    pub best_so_far: Option<f64>,
    pub pending: Option<SuggestionResponse>,
    pub kernel: KernelProvenance,
    pub request: CreateRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<CloseSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResponse {
    pub id: String,
    pub rows: usize,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, field: Option<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                field,
            },
        }
    }

    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid-request", message, Some(field.into()))
    }

    pub fn bad_body(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid-request", message, None)
    }

    pub fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("{what} not found"), None)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message, None)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message, None)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, None)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Envelope<'a> {
            error: &'a ErrorBody,
        }
        (self.status, axum::Json(Envelope { error: &self.body })).into_response()
    }
}

/// Deserialize a JSON body, reporting the path of the offending field.
pub fn parse_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        if path == "." {
            ApiError::bad_body(message)
        } else {
            ApiError::invalid(path, message)
        }
    })?;
    de.end().map_err(|e| ApiError::bad_body(e.to_string()))?;
    Ok(value)
}
