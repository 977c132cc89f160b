//! Datasets of npy scans on local disk.
//!
//! A dataset is a directory holding `manifest.json` and the scan files it
//! lists. Ingest decodes every scan once to validate it; afterwards scans are
//! read from the directory again on each [`Datastore::get_scan`].

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::npy::{decode_npy, ScanArray};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatastoreError {
    #[error("no {MANIFEST_FILE} in {0}")]
    MissingManifest(PathBuf),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("scan {scan_id:?}: {cause}")]
    BadScanFile { scan_id: String, cause: String },
    #[error("scan {scan_id:?} declares {declared:?} but holds {actual:?}")]
    ShapeMismatch {
        scan_id: String,
        declared: (usize, usize),
        actual: Vec<usize>,
    },
    #[error("dataset {0:?} is already registered with different content")]
    DuplicateDatasetId(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("unknown scan {scan_id:?} in dataset {dataset_id:?}")]
    UnknownScan { dataset_id: String, scan_id: String },
}

impl DatastoreError {
    pub fn code(&self) -> &'static str {
        match self {
            DatastoreError::MissingManifest(_) => "MissingManifest",
            DatastoreError::InvalidManifest(_) => "InvalidManifest",
            DatastoreError::BadScanFile { .. } => "BadScanFile",
            DatastoreError::ShapeMismatch { .. } => "ShapeMismatch",
            DatastoreError::DuplicateDatasetId(_) => "DuplicateDatasetId",
            DatastoreError::UnknownDataset(_) => "UnknownDataset",
            DatastoreError::UnknownScan { .. } => "UnknownScan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub scan_id: String,
    /// Path relative to the dataset directory.
    pub file: String,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub scans: Vec<ScanEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub name: String,
    pub description: String,
    pub scan_count: usize,
}

#[derive(Debug)]
struct Dataset {
    manifest: DatasetManifest,
    dir: PathBuf,
}

impl Dataset {
    fn entry(&self, scan_id: &str) -> Option<&ScanEntry> {
        self.manifest.scans.iter().find(|s| s.scan_id == scan_id)
    }
}

type Index = BTreeMap<String, Arc<Dataset>>;

/// In-memory index of ingested datasets.
///
/// Readers load a snapshot of the index and never wait on an ingest. Ingests
/// are serialized and publish a new snapshot once a dataset is fully checked.
#[derive(Debug, Default)]
pub struct Datastore {
    index: ArcSwap<Index>,
    ingest_lock: Mutex<()>,
}

impl Datastore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an index from every immediate subdirectory of `root` that holds
    /// a manifest. Datasets that fail validation are skipped and returned.
    pub fn open(root: &Path) -> std::io::Result<(Self, Vec<(PathBuf, DatastoreError)>)> {
        let store = Self::new();
        let mut skipped = Vec::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            if let Err(e) = store.ingest(&dir) {
                tracing::warn!(dir = %dir.display(), error = %e, "skipping dataset");
                skipped.push((dir, e));
            }
        }
        Ok((store, skipped))
    }

    /// Validates and registers the dataset in `dir`. Re-ingesting the same
    /// directory with unchanged content is a no-op.
    pub fn ingest(&self, dir: &Path) -> Result<DatasetManifest, DatastoreError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|_| DatastoreError::MissingManifest(dir.to_path_buf()))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| DatastoreError::InvalidManifest(e.to_string()))?;
        check_manifest(&manifest)?;
        let dir = dir
            .canonicalize()
            .map_err(|_| DatastoreError::MissingManifest(dir.to_path_buf()))?;

        for entry in &manifest.scans {
            load_scan(&dir, entry)?;
        }

        let _guard = self.ingest_lock.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.index.load_full();
        if let Some(existing) = current.get(&manifest.dataset_id) {
            if existing.dir == dir && existing.manifest == manifest {
                return Ok(manifest);
            }
            return Err(DatastoreError::DuplicateDatasetId(manifest.dataset_id));
        }
        let mut next = (*current).clone();
        next.insert(
            manifest.dataset_id.clone(),
            Arc::new(Dataset {
                manifest: manifest.clone(),
                dir,
            }),
        );
        self.index.store(Arc::new(next));
        Ok(manifest)
    }

    /// Summaries of every dataset, ordered by id.
    pub fn list_datasets(&self) -> Vec<DatasetSummary> {
        self.index
            .load()
            .values()
            .map(|d| DatasetSummary {
                dataset_id: d.manifest.dataset_id.clone(),
                name: d.manifest.name.clone(),
                description: d.manifest.description.clone(),
                scan_count: d.manifest.scans.len(),
            })
            .collect()
    }

    pub fn manifest(&self, dataset_id: &str) -> Result<DatasetManifest, DatastoreError> {
        self.index
            .load()
            .get(dataset_id)
            .map(|d| d.manifest.clone())
            .ok_or_else(|| DatastoreError::UnknownDataset(dataset_id.to_string()))
    }

    /// Reads and decodes one scan, re-checking it against the manifest.
    pub fn get_scan(&self, dataset_id: &str, scan_id: &str) -> Result<ScanArray, DatastoreError> {
        let index = self.index.load();
        let dataset = index
            .get(dataset_id)
            .ok_or_else(|| DatastoreError::UnknownDataset(dataset_id.to_string()))?;
        let entry = dataset.entry(scan_id).ok_or_else(|| DatastoreError::UnknownScan {
            dataset_id: dataset_id.to_string(),
            scan_id: scan_id.to_string(),
        })?;
        load_scan(&dataset.dir, entry)
    }
}

/// Identifiers end up in URL path segments.
pub(crate) fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn check_manifest(manifest: &DatasetManifest) -> Result<(), DatastoreError> {
    if !is_valid_id(&manifest.dataset_id) {
        return Err(DatastoreError::InvalidManifest(format!(
            "dataset_id {:?} must be 1-128 characters of [A-Za-z0-9._-]",
            manifest.dataset_id
        )));
    }
    for (i, entry) in manifest.scans.iter().enumerate() {
        if !is_valid_id(&entry.scan_id) {
            return Err(DatastoreError::InvalidManifest(format!(
                "scan_id {:?} must be 1-128 characters of [A-Za-z0-9._-]",
                entry.scan_id
            )));
        }
        if manifest.scans[..i].iter().any(|s| s.scan_id == entry.scan_id) {
            return Err(DatastoreError::InvalidManifest(format!(
                "scan_id {:?} appears twice",
                entry.scan_id
            )));
        }
    }
    Ok(())
}

fn load_scan(dir: &Path, entry: &ScanEntry) -> Result<ScanArray, DatastoreError> {
    let bad = |cause: String| DatastoreError::BadScanFile {
        scan_id: entry.scan_id.clone(),
        cause,
    };
    let rel = Path::new(&entry.file);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(bad(format!("file {:?} must be a plain relative path", entry.file)));
    }
    let bytes = std::fs::read(dir.join(rel)).map_err(|e| bad(format!("{}: {e}", entry.file)))?;
    let scan = decode_npy(&bytes).map_err(|e| bad(e.to_string()))?;
    if scan.ndim() != 2 {
        return Err(bad(format!("expected a 2-D array, found {} dimensions", scan.ndim())));
    }
    if scan.shape() != [entry.height, entry.width] {
        return Err(DatastoreError::ShapeMismatch {
            scan_id: entry.scan_id.clone(),
            declared: (entry.height, entry.width),
            actual: scan.shape().to_vec(),
        });
    }
    Ok(scan)
}
