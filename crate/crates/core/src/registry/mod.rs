//! Versioned model registry with staged, active and retired versions.
//!
//! A new version is registered as `Staged` next to whatever is serving,
//! validated against a dataset, then promoted. Promotion swaps the active
//! version atomically: readers see either the old or the new version and
//! never wait for the swap. Every mutation is journaled first when the
//! registry is backed by a file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datastore::{is_valid_id, Datastore, DatastoreError};
use crate::inference::{run_inference, DetectorKind, ParamSpec};

mod journal;

pub use journal::{EventKind, JournalEvent};
use journal::Journal;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("model {model_id:?} has no {wanted} version {version}")]
    UnknownVersion {
        model_id: String,
        version: u32,
        wanted: &'static str,
    },
    #[error("invalid parameter schema: {0}")]
    InvalidSchema(String),
    #[error("invalid model id {0:?}: use 1-128 characters of [A-Za-z0-9._-]")]
    InvalidModelId(String),
    #[error("version {version} of {model_id:?} has not passed validation")]
    NotValidated { model_id: String, version: u32 },
    #[error("version {version} of {model_id:?} is already active")]
    AlreadyActive { model_id: String, version: u32 },
    #[error("model {0:?} has no retired version to roll back to")]
    NothingToRollBackTo(String),
    #[error("model {0:?} has no active version")]
    NoActiveVersion(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error("journal i/o: {0}")]
    Io(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::UnknownModel(_) => "UnknownModel",
            RegistryError::UnknownVersion { .. } => "UnknownVersion",
            RegistryError::InvalidSchema(_) => "InvalidSchema",
            RegistryError::InvalidModelId(_) => "InvalidModelId",
            RegistryError::NotValidated { .. } => "NotValidated",
            RegistryError::AlreadyActive { .. } => "AlreadyActive",
            RegistryError::NothingToRollBackTo(_) => "NothingToRollBackTo",
            RegistryError::NoActiveVersion(_) => "NoActiveVersion",
            RegistryError::UnknownDataset(_) => "UnknownDataset",
            RegistryError::Journal { .. } => "JournalCorrupt",
            RegistryError::Io(_) => "JournalIo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifecycleState {
    Staged,
    Active,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub version: u32,
    pub display_name: String,
    pub detector: DetectorKind,
    pub param_schema: Vec<ParamSpec>,
    pub state: LifecycleState,
    pub validated: bool,
    pub created_at: DateTime<Utc>,
    /// SHA-256 over the immutable part of the record.
    pub checksum: String,
}

/// Fields supplied when registering a new version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewModel {
    pub model_id: String,
    pub display_name: String,
    pub detector: DetectorKind,
    #[serde(default)]
    pub param_schema: Vec<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationRecord {
    pub model_id: String,
    pub previous_active: Option<u32>,
    pub new_active: u32,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanValidation {
    pub scan_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roi_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model_id: String,
    pub version: u32,
    pub dataset_id: String,
    pub scans: Vec<ScanValidation>,
    pub validated: bool,
}

fn checksum(
    model_id: &str,
    version: u32,
    display_name: &str,
    detector: DetectorKind,
    param_schema: &[ParamSpec],
    created_at: &DateTime<Utc>,
) -> String {
    let record = serde_json::json!({
        "model_id": model_id,
        "version": version,
        "display_name": display_name,
        "detector": detector,
        "param_schema": param_schema,
        "created_at": created_at,
    });
    hex::encode(Sha256::digest(record.to_string().as_bytes()))
}

#[derive(Debug, Clone, Default)]
struct ModelHistory {
    versions: BTreeMap<u32, Arc<ModelDescriptor>>,
    active: Option<u32>,
    /// Retired versions, most recently retired last.
    retired: Vec<u32>,
}

impl ModelHistory {
    fn set_state(&mut self, version: u32, state: LifecycleState) {
        let desc = self.versions.get_mut(&version).expect("version present");
        Arc::make_mut(desc).state = state;
    }
}

#[derive(Debug, Clone, Default)]
struct State {
    models: BTreeMap<String, ModelHistory>,
}

impl State {
    fn model(&self, model_id: &str) -> Result<&ModelHistory, RegistryError> {
        self.models
            .get(model_id)
            .ok_or_else(|| RegistryError::UnknownModel(model_id.to_string()))
    }

    fn staged(&self, model_id: &str, version: u32) -> Result<&Arc<ModelDescriptor>, RegistryError> {
        self.model(model_id)?
            .versions
            .get(&version)
            .filter(|d| d.state == LifecycleState::Staged)
            .ok_or_else(|| RegistryError::UnknownVersion {
                model_id: model_id.to_string(),
                version,
                wanted: "staged",
            })
    }

    /// Applies one event, checking every precondition. The same code path
    /// serves live mutations and journal replay.
    fn apply(&mut self, event: &JournalEvent) -> Result<Option<ActivationRecord>, RegistryError> {
        let model_id = &event.model_id;
        let version = event.version;
        match &event.kind {
            EventKind::Register {
                display_name,
                detector,
                param_schema,
                checksum: sum,
            } => {
                let history = self.models.entry(model_id.clone()).or_default();
                if history.versions.keys().next_back().is_some_and(|&v| v >= version) || version == 0 {
                    return Err(RegistryError::Journal {
                        line: 0,
                        message: format!("version {version} of {model_id:?} is not increasing"),
                    });
                }
                let expected = checksum(model_id, version, display_name, *detector, param_schema, &event.ts);
                if &expected != sum {
                    return Err(RegistryError::Journal {
                        line: 0,
                        message: format!("checksum mismatch for {model_id:?} v{version}"),
                    });
                }
                history.versions.insert(
                    version,
                    Arc::new(ModelDescriptor {
                        model_id: model_id.clone(),
                        version,
                        display_name: display_name.clone(),
                        detector: *detector,
                        param_schema: param_schema.clone(),
                        state: LifecycleState::Staged,
                        validated: false,
                        created_at: event.ts,
                        checksum: sum.clone(),
                    }),
                );
                Ok(None)
            }
            EventKind::Validate { validated, .. } => {
                self.staged(model_id, version)?;
                let history = self.models.get_mut(model_id).expect("checked");
                let desc = history.versions.get_mut(&version).expect("checked");
                Arc::make_mut(desc).validated = *validated;
                Ok(None)
            }
            EventKind::Promote { previous_active, forced } => {
                let history = self.model(model_id)?;
                let target = history.versions.get(&version).ok_or_else(|| RegistryError::UnknownVersion {
                    model_id: model_id.clone(),
                    version,
                    wanted: "staged",
                })?;
                match target.state {
                    LifecycleState::Active => {
                        return Err(RegistryError::AlreadyActive {
                            model_id: model_id.clone(),
                            version,
                        })
                    }
                    LifecycleState::Retired => {
                        return Err(RegistryError::UnknownVersion {
                            model_id: model_id.clone(),
                            version,
                            wanted: "staged",
                        })
                    }
                    LifecycleState::Staged => {}
                }
                if !target.validated && !forced {
                    return Err(RegistryError::NotValidated {
                        model_id: model_id.clone(),
                        version,
                    });
                }
                if history.active != *previous_active {
                    return Err(journal_mismatch(model_id, "previous active version"));
                }
                let history = self.models.get_mut(model_id).expect("checked");
                if let Some(old) = history.active {
                    history.set_state(old, LifecycleState::Retired);
                    history.retired.push(old);
                }
                history.set_state(version, LifecycleState::Active);
                history.active = Some(version);
                Ok(Some(ActivationRecord {
                    model_id: model_id.clone(),
                    previous_active: *previous_active,
                    new_active: version,
                    at: event.ts,
                }))
            }
            EventKind::Rollback { previous_active } => {
                let history = self.model(model_id)?;
                let (Some(current), Some(&target)) = (history.active, history.retired.last()) else {
                    return Err(RegistryError::NothingToRollBackTo(model_id.clone()));
                };
                if current != *previous_active || target != version {
                    return Err(journal_mismatch(model_id, "rollback target"));
                }
                let history = self.models.get_mut(model_id).expect("checked");
                history.retired.pop();
                history.set_state(current, LifecycleState::Retired);
                history.retired.push(current);
                history.set_state(target, LifecycleState::Active);
                history.active = Some(target);
                Ok(Some(ActivationRecord {
                    model_id: model_id.clone(),
                    previous_active: Some(current),
                    new_active: target,
                    at: event.ts,
                }))
            }
        }
    }
}

fn journal_mismatch(model_id: &str, what: &str) -> RegistryError {
    RegistryError::Journal {
        line: 0,
        message: format!("{what} of {model_id:?} disagrees with registry state"),
    }
}

/// The model registry. Share it behind an `Arc`.
#[derive(Debug)]
pub struct Registry {
    state: ArcSwap<State>,
    journal: Mutex<Option<Journal>>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Registry {
    /// A registry without persistence.
    pub fn in_memory() -> Self {
        Registry {
            state: ArcSwap::from_pointee(State::default()),
            journal: Mutex::new(None),
        }
    }

    /// Replays the journal at `path` (creating it if absent) and appends to it from then on.
    pub fn open(path: &Path) -> Result<Self, RegistryError> {
        let (journal, events) = Journal::open(path)?;
        let mut state = State::default();
        for (i, event) in events.iter().enumerate() {
            state.apply(event).map_err(|e| RegistryError::Journal {
                line: i + 1,
                message: match e {
                    RegistryError::Journal { message, .. } => message,
                    other => other.to_string(),
                },
            })?;
        }
        Ok(Registry {
            state: ArcSwap::from_pointee(state),
            journal: Mutex::new(Some(journal)),
        })
    }

    /// Serializes writers: applies `build(state)` to a copy of the current
    /// state, journals the event, then publishes the copy.
    fn mutate<F>(&self, build: F) -> Result<(JournalEvent, Option<ActivationRecord>), RegistryError>
    where
        F: FnOnce(&State) -> Result<JournalEvent, RegistryError>,
    {
        let mut journal = self.journal.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.state.load_full();
        let event = build(&current)?;
        let mut next = (*current).clone();
        let record = next.apply(&event)?;
        if let Some(journal) = journal.as_mut() {
            journal.append(&event)?;
        }
        self.state.store(Arc::new(next));
        Ok((event, record))
    }

    /// Registers a new staged version; the serving version is unaffected.
    pub fn register_model(&self, new: NewModel) -> Result<ModelDescriptor, RegistryError> {
        if !is_valid_id(&new.model_id) {
            return Err(RegistryError::InvalidModelId(new.model_id));
        }
        new.detector
            .check_schema(&new.param_schema)
            .map_err(RegistryError::InvalidSchema)?;
        let (event, _) = self.mutate(|state| {
            let version = state
                .models
                .get(&new.model_id)
                .and_then(|h| h.versions.keys().next_back().copied())
                .unwrap_or(0)
                + 1;
            let ts = Utc::now();
            Ok(JournalEvent {
                ts,
                kind: EventKind::Register {
                    display_name: new.display_name.clone(),
                    detector: new.detector,
                    checksum: checksum(
                        &new.model_id,
                        version,
                        &new.display_name,
                        new.detector,
                        &new.param_schema,
                        &ts,
                    ),
                    param_schema: new.param_schema.clone(),
                },
                model_id: new.model_id.clone(),
                version,
            })
        })?;
        self.descriptor(&event.model_id, event.version)
    }

    /// Runs the staged version with default parameters over every scan of a
    /// dataset. The version is marked validated iff every scan succeeds.
    pub fn validate(
        &self,
        model_id: &str,
        version: u32,
        dataset_id: &str,
        datastore: &Datastore,
    ) -> Result<ValidationReport, RegistryError> {
        let desc = self.state.load().staged(model_id, version)?.clone();
        let manifest = datastore
            .manifest(dataset_id)
            .map_err(|_| RegistryError::UnknownDataset(dataset_id.to_string()))?;

        let no_overrides = BTreeMap::new();
        let scans: Vec<ScanValidation> = manifest
            .scans
            .iter()
            .map(|entry| {
                let outcome = datastore
                    .get_scan(dataset_id, &entry.scan_id)
                    .map_err(|e: DatastoreError| format!("{}: {e}", e.code()))
                    .and_then(|scan| {
                        run_inference(&desc, &scan, &no_overrides).map_err(|e| format!("{}: {e}", e.code()))
                    });
                match outcome {
                    Ok(out) => ScanValidation {
                        scan_id: entry.scan_id.clone(),
                        roi_count: Some(out.rois.len()),
                        error: None,
                    },
                    Err(error) => ScanValidation {
                        scan_id: entry.scan_id.clone(),
                        roi_count: None,
                        error: Some(error),
                    },
                }
            })
            .collect();
        let validated = scans.iter().all(|s| s.error.is_none());

        self.mutate(|state| {
            state.staged(model_id, version)?;
            Ok(JournalEvent {
                ts: Utc::now(),
                kind: EventKind::Validate {
                    dataset_id: dataset_id.to_string(),
                    validated,
                },
                model_id: model_id.to_string(),
                version,
            })
        })?;
        Ok(ValidationReport {
            model_id: model_id.to_string(),
            version,
            dataset_id: dataset_id.to_string(),
            scans,
            validated,
        })
    }

    /// Makes a staged version active and retires the previous one in a single step.
    pub fn promote(&self, model_id: &str, version: u32, force: bool) -> Result<ActivationRecord, RegistryError> {
        let (_, record) = self.mutate(|state| {
            Ok(JournalEvent {
                ts: Utc::now(),
                kind: EventKind::Promote {
                    previous_active: state.model(model_id)?.active,
                    forced: force,
                },
                model_id: model_id.to_string(),
                version,
            })
        })?;
        Ok(record.expect("promotion yields a record"))
    }

    /// Reactivates the most recently retired version.
    pub fn rollback(&self, model_id: &str) -> Result<ActivationRecord, RegistryError> {
        let (_, record) = self.mutate(|state| {
            let history = state.model(model_id)?;
            let (Some(current), Some(&target)) = (history.active, history.retired.last()) else {
                return Err(RegistryError::NothingToRollBackTo(model_id.to_string()));
            };
            Ok(JournalEvent {
                ts: Utc::now(),
                kind: EventKind::Rollback {
                    previous_active: current,
                },
                model_id: model_id.to_string(),
                version: target,
            })
        })?;
        Ok(record.expect("rollback yields a record"))
    }

    /// The currently serving descriptor. Lock-free.
    pub fn resolve_active(&self, model_id: &str) -> Result<Arc<ModelDescriptor>, RegistryError> {
        let state = self.state.load();
        let history = state.model(model_id)?;
        let version = history
            .active
            .ok_or_else(|| RegistryError::NoActiveVersion(model_id.to_string()))?;
        Ok(history.versions[&version].clone())
    }

    /// Active and staged descriptors (plus retired ones on request), ordered by `(model_id, version)`.
    pub fn list_models(&self, include_retired: bool) -> Vec<ModelDescriptor> {
        self.state
            .load()
            .models
            .values()
            .flat_map(|h| h.versions.values())
            .filter(|d| include_retired || d.state != LifecycleState::Retired)
            .map(|d| (**d).clone())
            .collect()
    }

    pub fn descriptor(&self, model_id: &str, version: u32) -> Result<ModelDescriptor, RegistryError> {
        self.state
            .load()
            .model(model_id)?
            .versions
            .get(&version)
            .map(|d| (**d).clone())
            .ok_or_else(|| RegistryError::UnknownVersion {
                model_id: model_id.to_string(),
                version,
                wanted: "registered",
            })
    }
}
