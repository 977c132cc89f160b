#![allow(dead_code)]

pub mod arrays;
pub mod lifecycle;
pub mod oracle;

use std::path::{Path, PathBuf};

use ndiserve::config::{ServerConfig, TokenSeed};
use ndiserve::datastore::{DatasetManifest, ScanEntry, MANIFEST_FILE};
use ndiserve::gateway::{AppState, Role, Server};
use ndiserve::{encode_npy, ArrayData, ScanArray};
use reqwest::{Method, StatusCode};
use serde_json::Value;
use tokio::sync::oneshot;

pub const ADMIN: &str = "admin-token";
pub const INSPECTOR: &str = "inspector-token";
pub const VIEWER: &str = "viewer-token";

pub fn token_seeds() -> Vec<TokenSeed> {
    [(ADMIN, "ops", Role::Admin), (INSPECTOR, "inspector", Role::Inspector), (VIEWER, "floor", Role::Viewer)]
        .into_iter()
        .map(|(token, name, role)| TokenSeed {
            token: token.into(),
            name: name.into(),
            role,
        })
        .collect()
}

pub fn write_dataset(dir: &Path, dataset_id: &str, scans: &[(&str, ScanArray)]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut entries = Vec::new();
    for (scan_id, scan) in scans {
        let file = format!("{scan_id}.npy");
        std::fs::write(dir.join(&file), encode_npy(scan)).unwrap();
        entries.push(ScanEntry {
            scan_id: scan_id.to_string(),
            file,
            height: scan.shape()[0],
            width: scan.shape().get(1).copied().unwrap_or(1),
        });
    }
    let manifest = DatasetManifest {
        dataset_id: dataset_id.into(),
        name: format!("{dataset_id} scans"),
        description: "fixture".into(),
        scans: entries,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();
}

pub fn one_by_five() -> ScanArray {
    ScanArray::from_rows(&[&[0., 0., 0., 0., 10.]]).unwrap()
}

pub fn spike_grid() -> ScanArray {
    let mut values = vec![1.0f32; 36];
    values[14] = 40.0;
    ScanArray::new(vec![6, 6], ArrayData::F32(values)).unwrap()
}

pub fn ramp_u8() -> ScanArray {
    ScanArray::new(vec![3, 3], ArrayData::U8((1..=9).collect())).unwrap()
}

/// Writes the standard "plates" dataset (three valid scans) and a "wide"
/// dataset whose only scan uses a dtype the detectors reject.
pub fn write_fixture_datasets(root: &Path) {
    write_dataset(
        &root.join("plates"),
        "plates",
        &[("s1", one_by_five()), ("s2", spike_grid()), ("s3", ramp_u8())],
    );
    write_dataset(
        &root.join("wide"),
        "wide",
        &[
            ("ok", one_by_five()),
            ("i64", ScanArray::new(vec![1, 2], ArrayData::I64(vec![1, 2])).unwrap()),
        ],
    );
}

pub struct TestServer {
    pub base: String,
    pub state: AppState,
    pub dir: tempfile::TempDir,
    pub http: reqwest::Client,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<()>>,
}

impl TestServer {
    pub fn config(dir: &Path) -> ServerConfig {
        ServerConfig {
            listen_addr: "127.0.0.1:0".into(),
            datasets_root: dir.join("datasets"),
            journal_path: dir.join("registry.ndjson"),
            audit_path: dir.join("audit.ndjson"),
            tokens: token_seeds(),
            max_body_bytes: 64 * 1024 * 1024,
        }
    }

    /// Starts a gateway over fresh temporary state with the fixture datasets.
    pub async fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_fixture_datasets(&dir.path().join("datasets"));
        Self::start_in(dir, |c| c).await
    }

    pub async fn start_in(dir: tempfile::TempDir, tweak: impl FnOnce(ServerConfig) -> ServerConfig) -> Self {
        let config = tweak(Self::config(dir.path()));
        let server = Server::bind(&config).await.expect("server binds");
        let base = format!("http://{}", server.local_addr());
        let state = server.state().clone();
        let (tx, rx) = oneshot::channel();
        let handle = tokio::spawn(async move {
            server
                .run(async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
        TestServer {
            base,
            state,
            dir,
            http: reqwest::Client::builder().pool_max_idle_per_host(256).build().unwrap(),
            shutdown: Some(tx),
            handle: Some(handle),
        }
    }

    pub fn datasets_root(&self) -> PathBuf {
        self.dir.path().join("datasets")
    }

    pub async fn request(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        if let Some(body) = body {
            req = req.json(&body);
        }
        let resp = req.send().await.expect("request reaches server");
        let status = resp.status();
        let request_id = resp
            .headers()
            .get("x-request-id")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string();
        let bytes = resp.bytes().await.unwrap().to_vec();
        let json = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        Reply {
            status,
            json,
            bytes,
            content_type,
            request_id,
        }
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> Reply {
        self.request(Method::GET, path, token, None).await
    }

    pub async fn post(&self, path: &str, token: Option<&str>, body: Value) -> Reply {
        self.request(Method::POST, path, token, Some(body)).await
    }

    /// Registers, validates against "plates" and promotes a new version.
    pub async fn deploy(&self, model: Value) -> u32 {
        let reg = self.post("/api/v1/models", Some(ADMIN), model).await;
        assert_eq!(reg.status, StatusCode::CREATED, "{}", reg.json);
        let id = reg.json["model_id"].as_str().unwrap().to_string();
        let version = reg.json["version"].as_u64().unwrap() as u32;
        let val = self
            .post(
                &format!("/api/v1/models/{id}/versions/{version}/validate"),
                Some(ADMIN),
                serde_json::json!({"dataset_id": "plates"}),
            )
            .await;
        assert_eq!(val.status, StatusCode::OK, "{}", val.json);
        assert_eq!(val.json["validated"], true, "{}", val.json);
        let promo = self
            .post(
                &format!("/api/v1/models/{id}/versions/{version}/promote"),
                Some(ADMIN),
                serde_json::json!({"force": false}),
            )
            .await;
        assert_eq!(promo.status, StatusCode::OK, "{}", promo.json);
        version
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.handle.take() {
            handle.await.unwrap();
        }
    }
}

pub fn zscore_model(id: &str, k_default: f64) -> Value {
    serde_json::json!({
        "model_id": id,
        "display_name": "z-score detector",
        "detector": "zscore",
        "param_schema": [
            {"name": "k", "kind": "float", "min": 0.1, "max": 10.0, "default": k_default},
            {"name": "confidence", "kind": "float", "min": 0.0, "max": 1.0, "default": 0.0}
        ]
    })
}

#[derive(Debug)]
pub struct Reply {
    pub status: StatusCode,
    pub json: Value,
    pub bytes: Vec<u8>,
    pub content_type: String,
    pub request_id: Option<String>,
}
