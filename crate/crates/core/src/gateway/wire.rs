//! Request and response bodies of the HTTP API.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Body of `POST /api/v1/infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceRequest {
    pub model_id: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    pub data: DataSource,
}

/// Where the scan comes from: inline npy bytes or a dataset reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Inline(InlineScan),
    Reference(ScanRef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScan {
    /// Standard base64 of a complete `.npy` file.
    pub npy_base64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRef {
    pub dataset_id: String,
    pub scan_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromoteBody {
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidateBody {
    pub dataset_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestBody {
    /// Absolute, or relative to the configured datasets root.
    pub path: String,
}

/// Every error response carries this body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub request_id: String,
}

/// JSON Schema (draft 2020-12) of a successful `/api/v1/infer` response.
pub fn inference_outcome_schema() -> Value {
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "InferenceOutcome",
        "type": "object",
        "additionalProperties": false,
        "required": ["model_id", "version", "rois", "params_used", "duration_ms"],
        "properties": {
            "model_id": { "type": "string", "minLength": 1 },
            "version": { "type": "integer", "minimum": 1 },
            "rois": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["row", "col", "score"],
                    "properties": {
                        "row": { "type": "integer", "minimum": 0 },
                        "col": { "type": "integer", "minimum": 0 },
                        "score": { "type": "number", "minimum": 0, "maximum": 1 }
                    }
                }
            },
            "params_used": {
                "type": "object",
                "additionalProperties": { "type": ["number", "boolean"] }
            },
            "duration_ms": { "type": "number", "minimum": 0 }
        }
    })
}
