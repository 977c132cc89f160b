use std::collections::BTreeMap;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::Engine;
use serde::Deserialize;
use serde_json::Value;

use crate::datastore::{DatasetManifest, DatasetSummary, Datastore};
use crate::inference::{run_inference, InferenceOutcome, ParamValue};
use crate::npy::{decode_npy, encode_npy, ScanArray};
use crate::registry::{ActivationRecord, ModelDescriptor, NewModel, ValidationReport};

use super::audit::MAX_AUDIT_LIMIT;
use super::wire::{inference_outcome_schema, DataSource, IngestBody, InferenceRequest, PromoteBody, ValidateBody};
use super::{blocking, octet_stream, ApiError, AppState, AuditRecord};

#[derive(Debug, Deserialize)]
pub(super) struct ListQuery {
    #[serde(default)]
    include_retired: bool,
}

pub(super) async fn list_models(State(app): State<AppState>, Query(q): Query<ListQuery>) -> Json<Vec<ModelDescriptor>> {
    Json(app.registry.list_models(q.include_retired))
}

pub(super) async fn register_model(
    State(app): State<AppState>,
    Json(new): Json<NewModel>,
) -> Result<(StatusCode, Json<ModelDescriptor>), ApiError> {
    let registry = app.registry.clone();
    let desc = blocking(move || Ok(registry.register_model(new)?)).await?;
    Ok((StatusCode::CREATED, Json(desc)))
}

pub(super) async fn validate(
    State(app): State<AppState>,
    Path((model_id, version)): Path<(String, u32)>,
    Json(body): Json<ValidateBody>,
) -> Result<Json<ValidationReport>, ApiError> {
    let report = blocking(move || {
        Ok(app
            .registry
            .validate(&model_id, version, &body.dataset_id, &app.datastore)?)
    })
    .await?;
    Ok(Json(report))
}

pub(super) async fn promote(
    State(app): State<AppState>,
    Path((model_id, version)): Path<(String, u32)>,
    body: Bytes,
) -> Result<Json<ActivationRecord>, ApiError> {
    // An empty body means `{"force": false}`.
    let body: PromoteBody = if body.iter().all(u8::is_ascii_whitespace) {
        PromoteBody::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidRequest", e.to_string()))?
    };
    let registry = app.registry.clone();
    let record = blocking(move || Ok(registry.promote(&model_id, version, body.force)?)).await?;
    Ok(Json(record))
}

pub(super) async fn rollback(
    State(app): State<AppState>,
    Path(model_id): Path<String>,
) -> Result<Json<ActivationRecord>, ApiError> {
    let registry = app.registry.clone();
    let record = blocking(move || Ok(registry.rollback(&model_id)?)).await?;
    Ok(Json(record))
}

pub(super) async fn list_datasets(State(app): State<AppState>) -> Json<Vec<DatasetSummary>> {
    Json(app.datastore.list_datasets())
}

pub(super) async fn ingest(
    State(app): State<AppState>,
    Json(body): Json<IngestBody>,
) -> Result<(StatusCode, Json<DatasetManifest>), ApiError> {
    let mut dir = PathBuf::from(&body.path);
    if dir.is_relative() {
        if let Some(root) = &app.datasets_root {
            dir = root.join(dir);
        }
    }
    let datastore = app.datastore.clone();
    let manifest = blocking(move || Ok(datastore.ingest(&dir)?)).await?;
    Ok((StatusCode::CREATED, Json(manifest)))
}

pub(super) async fn dataset(
    State(app): State<AppState>,
    Path(dataset_id): Path<String>,
) -> Result<Json<DatasetManifest>, ApiError> {
    Ok(Json(app.datastore.manifest(&dataset_id)?))
}

pub(super) async fn scan(
    State(app): State<AppState>,
    Path((dataset_id, scan_id)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let datastore = app.datastore.clone();
    let bytes = blocking(move || Ok(encode_npy(&datastore.get_scan(&dataset_id, &scan_id)?))).await?;
    Ok(octet_stream(bytes))
}

pub(super) async fn infer(
    State(app): State<AppState>,
    Json(req): Json<InferenceRequest>,
) -> Result<Json<InferenceOutcome>, ApiError> {
    // Pin the serving version for the whole request.
    let desc = app.registry.resolve_active(&req.model_id)?;
    let overrides = param_overrides(&req.params)?;
    let datastore = app.datastore.clone();
    let outcome = blocking(move || {
        let scan = load_scan(&datastore, req.data)?;
        Ok(run_inference(&desc, &scan, &overrides)?)
    })
    .await?;
    Ok(Json(outcome))
}

fn load_scan(datastore: &Datastore, data: DataSource) -> Result<ScanArray, ApiError> {
    match data {
        DataSource::Inline(inline) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(inline.npy_base64.trim())
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidBase64", e.to_string()))?;
            Ok(decode_npy(&bytes)?)
        }
        DataSource::Reference(r) => Ok(datastore.get_scan(&r.dataset_id, &r.scan_id)?),
    }
}

/// JSON numbers and booleans map onto parameter values; anything else is a kind mismatch.
fn param_overrides(params: &BTreeMap<String, Value>) -> Result<BTreeMap<String, ParamValue>, ApiError> {
    params
        .iter()
        .map(|(name, value)| {
            let converted = match value {
                Value::Bool(b) => Some(ParamValue::Bool(*b)),
                Value::Number(n) => n
                    .as_i64()
                    .map(ParamValue::Int)
                    .or_else(|| n.as_f64().map(ParamValue::Float)),
                _ => None,
            };
            converted.map(|v| (name.clone(), v)).ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "ParamKindMismatch",
                    format!("parameter {name:?} must be a number or boolean"),
                )
            })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
pub(super) struct AuditQuery {
    limit: Option<usize>,
}

pub(super) async fn audit(State(app): State<AppState>, Query(q): Query<AuditQuery>) -> Json<Vec<AuditRecord>> {
    let limit = q.limit.unwrap_or(100).min(MAX_AUDIT_LIMIT);
    Json(app.audit.recent(limit))
}

pub(super) async fn outcome_schema() -> Json<Value> {
    Json(inference_outcome_schema())
}

pub(super) async fn not_found(method: Method, uri: Uri) -> Response {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no route for {method} {}", uri.path())).into_response()
}

