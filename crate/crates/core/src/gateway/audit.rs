//! Append-only audit trail: one record per request received by the gateway.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Role;

/// Records kept in memory for `GET /api/v1/audit`.
const RECENT_CAPACITY: usize = 10_000;

/// Largest `limit` the audit endpoint honors.
pub const MAX_AUDIT_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Denied,
    Error,
}

impl Outcome {
    pub fn from_status(status: u16) -> Self {
        match status {
            200..=299 => Outcome::Ok,
            401 | 403 => Outcome::Denied,
            _ => Outcome::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub ts: DateTime<Utc>,
    pub request_id: String,
    /// Principal name, or `"anonymous"`.
    pub principal: String,
    pub role: Option<Role>,
    /// Method and route template, e.g. `POST /api/v1/models/{model_id}/rollback`.
    pub action: String,
    /// The concrete request path.
    pub resource: String,
    pub status: u16,
    pub outcome: Outcome,
    pub latency_ms: f64,
}

#[derive(Debug)]
struct Sink {
    recent: VecDeque<AuditRecord>,
    file: Option<File>,
    total: u64,
}

/// Serializes appends so records are totally ordered by write time.
#[derive(Debug)]
pub struct AuditLog {
    sink: Mutex<Sink>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog {
            sink: Mutex::new(Sink {
                recent: VecDeque::new(),
                file: None,
                total: 0,
            }),
        }
    }

    /// Appends to `path` as newline-delimited JSON, creating it if needed.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let log = Self::in_memory();
        log.sink.lock().unwrap().file = Some(file);
        Ok(log)
    }

    pub fn append(&self, record: AuditRecord) {
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(file) = sink.file.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("audit records serialize");
            line.push(b'\n');
            if let Err(e) = file.write_all(&line) {
                tracing::error!(error = %e, "audit file write failed");
            }
        }
        if sink.recent.len() == RECENT_CAPACITY {
            sink.recent.pop_front();
        }
        sink.recent.push_back(record);
        sink.total += 1;
    }

    /// The newest `limit` records, newest first.
    pub fn recent(&self, limit: usize) -> Vec<AuditRecord> {
        let sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        sink.recent.iter().rev().take(limit).cloned().collect()
    }

    /// Records written since startup.
    pub fn total(&self) -> u64 {
        self.sink.lock().unwrap_or_else(|e| e.into_inner()).total
    }
}
