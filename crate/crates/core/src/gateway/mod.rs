//! The HTTP gateway: the single entry point for browsers and operator tools.
//!
//! Every request passes through one middleware that assigns a request id,
//! authenticates the bearer token, enforces the role table
//! ([`ACCESS_TABLE`]) and writes exactly one [`AuditRecord`] once the response
//! is ready, whether the request succeeded, was denied or failed.
//!
//! Inference pins the active model version when the request arrives, so a
//! promotion that lands mid-request never changes which detector runs.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, MatchedPath, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use thiserror::Error;
use tokio::net::TcpListener;

use crate::config::{ConfigError, ServerConfig, TokenSeed};
use crate::datastore::{Datastore, DatastoreError};
use crate::inference::InferenceError;
use crate::npy::NpyError;
use crate::registry::{Registry, RegistryError};

pub mod audit;
mod auth;
mod handlers;
pub mod wire;

pub use audit::{AuditLog, AuditRecord, Outcome};
pub use auth::{required_role, Principal, Role, TokenTable, ACCESS_TABLE};
pub use wire::{inference_outcome_schema, DataSource, ErrorBody, InferenceRequest, InlineScan, ScanRef};

pub const REQUEST_ID_HEADER: &str = "x-request-id";

tokio::task_local! {
    static REQUEST_ID: String;
}

/// An error response: HTTP status plus a machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let request_id = REQUEST_ID.try_with(Clone::clone).unwrap_or_default();
        let body = ErrorBody {
            code: self.code,
            message: self.message,
            request_id,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::UnknownModel(_)
            | RegistryError::UnknownVersion { .. }
            | RegistryError::UnknownDataset(_) => StatusCode::NOT_FOUND,
            RegistryError::NoActiveVersion(_)
            | RegistryError::NotValidated { .. }
            | RegistryError::AlreadyActive { .. }
            | RegistryError::NothingToRollBackTo(_) => StatusCode::CONFLICT,
            RegistryError::InvalidSchema(_) | RegistryError::InvalidModelId(_) => StatusCode::UNPROCESSABLE_ENTITY,
            RegistryError::Journal { .. } | RegistryError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<DatastoreError> for ApiError {
    fn from(e: DatastoreError) -> Self {
        let status = match &e {
            DatastoreError::UnknownDataset(_) | DatastoreError::UnknownScan { .. } => StatusCode::NOT_FOUND,
            DatastoreError::DuplicateDatasetId(_) => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

impl From<NpyError> for ApiError {
    fn from(e: NpyError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

/// Shared state of a running gateway.
#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub datastore: Arc<Datastore>,
    pub audit: Arc<AuditLog>,
    tokens: Arc<TokenTable>,
    datasets_root: Option<PathBuf>,
    max_body_bytes: usize,
}

impl AppState {
    pub fn new(registry: Arc<Registry>, datastore: Arc<Datastore>, audit: Arc<AuditLog>, tokens: &[TokenSeed]) -> Self {
        AppState {
            registry,
            datastore,
            audit,
            tokens: Arc::new(TokenTable::new(tokens)),
            datasets_root: None,
            max_body_bytes: crate::config::DEFAULT_MAX_BODY_BYTES,
        }
    }

    /// Relative ingest paths are resolved against this directory.
    pub fn with_datasets_root(mut self, root: PathBuf) -> Self {
        self.datasets_root = Some(root);
        self
    }

    pub fn with_max_body_bytes(mut self, limit: usize) -> Self {
        self.max_body_bytes = limit;
        self
    }

    /// Replays the journal, scans the datasets root and opens the audit file.
    pub fn from_config(config: &ServerConfig) -> Result<Self, ServeError> {
        config.validate()?;
        let registry = Registry::open(&config.journal_path)?;
        std::fs::create_dir_all(&config.datasets_root).map_err(|source| ServeError::Datasets {
            path: config.datasets_root.clone(),
            source,
        })?;
        let (datastore, _skipped) = Datastore::open(&config.datasets_root).map_err(|source| ServeError::Datasets {
            path: config.datasets_root.clone(),
            source,
        })?;
        let audit = AuditLog::open(&config.audit_path).map_err(|source| ServeError::Audit {
            path: config.audit_path.clone(),
            source,
        })?;
        Ok(AppState::new(Arc::new(registry), Arc::new(datastore), Arc::new(audit), &config.tokens)
            .with_datasets_root(config.datasets_root.clone())
            .with_max_body_bytes(config.max_body_bytes))
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("registry journal: {0}")]
    Registry(#[from] RegistryError),
    #[error("datasets root {path}: {source}")]
    Datasets { path: PathBuf, source: std::io::Error },
    #[error("audit log {path}: {source}")]
    Audit { path: PathBuf, source: std::io::Error },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds the API router over `state`.
pub fn router(state: AppState) -> Router {
    let limit = state.max_body_bytes;
    Router::new()
        .route("/api/v1/models", get(handlers::list_models).post(handlers::register_model))
        .route(
            "/api/v1/models/{model_id}/versions/{version}/validate",
            post(handlers::validate),
        )
        .route(
            "/api/v1/models/{model_id}/versions/{version}/promote",
            post(handlers::promote),
        )
        .route("/api/v1/models/{model_id}/rollback", post(handlers::rollback))
        .route("/api/v1/datasets", get(handlers::list_datasets).post(handlers::ingest))
        .route("/api/v1/datasets/{dataset_id}", get(handlers::dataset))
        .route("/api/v1/datasets/{dataset_id}/scans/{scan_id}", get(handlers::scan))
        .route("/api/v1/infer", post(handlers::infer))
        .route("/api/v1/audit", get(handlers::audit))
        .route("/api/v1/schema/inference-outcome", get(handlers::outcome_schema))
        .fallback(handlers::not_found)
        .layer(DefaultBodyLimit::max(limit))
        .layer(middleware::from_fn_with_state(state.clone(), front_door))
        .with_state(state)
}

/// Request id, authentication, authorization and auditing for every request.
async fn front_door(State(app): State<AppState>, mut req: Request, next: Next) -> Response {
    let started = Instant::now();
    let request_id = uuid::Uuid::new_v4().to_string();
    let method = req.method().clone();
    let resource = req.uri().path().to_string();
    let template = req.extensions().get::<MatchedPath>().map(|p| p.as_str().to_string());
    let principal = app.tokens.authenticate(req.headers()).cloned();
    let required = template.as_deref().and_then(|t| required_role(&method, t));

    let mut response = REQUEST_ID
        .scope(request_id.clone(), async {
            match (required, &principal) {
                (Some(_), None) => ApiError::new(
                    StatusCode::UNAUTHORIZED,
                    "Unauthorized",
                    "missing or unknown bearer token",
                )
                .into_response(),
                (Some(role), Some(p)) if !p.role.grants(role) => ApiError::new(
                    StatusCode::FORBIDDEN,
                    "Forbidden",
                    format!("requires the {role} role"),
                )
                .into_response(),
                _ => {
                    if let Some(p) = &principal {
                        req.extensions_mut().insert(p.clone());
                    }
                    json_errors(next.run(req).await).await
                }
            }
        })
        .await;

    if let Ok(value) = HeaderValue::from_str(&request_id) {
        response.headers_mut().insert(REQUEST_ID_HEADER, value);
    }
    let status = response.status().as_u16();
    app.audit.append(AuditRecord {
        ts: Utc::now(),
        request_id,
        principal: principal
            .as_ref()
            .map_or_else(|| "anonymous".to_string(), |p| p.name.clone()),
        role: principal.as_ref().map(|p| p.role),
        action: format!("{method} {}", template.as_deref().unwrap_or(&resource)),
        resource,
        status,
        outcome: Outcome::from_status(status),
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    });
    response
}

/// Rewrites plain-text framework rejections into the JSON error body.
async fn json_errors(response: Response) -> Response {
    let status = response.status();
    if !(status.is_client_error() || status.is_server_error()) {
        return response;
    }
    let is_json = response
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if is_json {
        return response;
    }
    let bytes = axum::body::to_bytes(response.into_body(), 64 * 1024)
        .await
        .unwrap_or_default();
    let code = match status {
        StatusCode::BAD_REQUEST => "BadRequest",
        StatusCode::NOT_FOUND => "NotFound",
        StatusCode::METHOD_NOT_ALLOWED => "MethodNotAllowed",
        StatusCode::PAYLOAD_TOO_LARGE => "PayloadTooLarge",
        StatusCode::UNSUPPORTED_MEDIA_TYPE => "UnsupportedMediaType",
        StatusCode::UNPROCESSABLE_ENTITY => "InvalidRequest",
        _ => "InternalError",
    };
    ApiError::new(status, code, String::from_utf8_lossy(&bytes).trim()).into_response()
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// A bound, not yet running, gateway.
pub struct Server {
    listener: TcpListener,
    state: AppState,
}

impl Server {
    pub async fn bind(config: &ServerConfig) -> Result<Self, ServeError> {
        let state = AppState::from_config(config)?;
        Self::bind_with_state(&config.listen_addr, state).await
    }

    pub async fn bind_with_state(addr: &str, state: AppState) -> Result<Self, ServeError> {
        let listener = TcpListener::bind(addr).await.map_err(|source| ServeError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        Ok(Server { listener, state })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Serves until `shutdown` resolves, then drains in-flight requests.
    pub async fn run<F>(self, shutdown: F) -> Result<(), ServeError>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let app = router(self.state);
        axum::serve(self.listener, app)
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}

fn octet_stream(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], Body::from(bytes)).into_response()
}
