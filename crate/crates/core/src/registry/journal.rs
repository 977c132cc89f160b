//! Newline-delimited JSON journal of registry events.
//!
//! Every mutation is appended as one line before it becomes visible to
//! readers. Replaying the file in order rebuilds the registry.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::inference::{DetectorKind, ParamSpec};

use super::RegistryError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEvent {
    pub ts: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
    pub model_id: String,
    /// The version the event is about. For promote and rollback this is the
    /// newly active version.
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Register {
        display_name: String,
        detector: DetectorKind,
        param_schema: Vec<ParamSpec>,
        checksum: String,
    },
    Validate {
        dataset_id: String,
        validated: bool,
    },
    Promote {
        previous_active: Option<u32>,
        forced: bool,
    },
    Rollback {
        previous_active: u32,
    },
}

#[derive(Debug)]
pub(crate) struct Journal {
    file: File,
    path: PathBuf,
}

impl Journal {
    /// Reads every event in `path` (missing file = empty journal) and opens it for appending.
    pub fn open(path: &Path) -> Result<(Self, Vec<JournalEvent>), RegistryError> {
        let mut events = Vec::new();
        match File::open(path) {
            Ok(file) => {
                let mut reader = BufReader::new(file);
                let mut line = String::new();
                let mut number = 0;
                loop {
                    line.clear();
                    let n = reader.read_line(&mut line).map_err(|e| io_error(path, e))?;
                    if n == 0 {
                        break;
                    }
                    number += 1;
                    if !line.ends_with('\n') {
                        return Err(RegistryError::Journal {
                            line: number,
                            message: "truncated final record".into(),
                        });
                    }
                    if line.trim().is_empty() {
                        continue;
                    }
                    let event = serde_json::from_str(&line).map_err(|e| RegistryError::Journal {
                        line: number,
                        message: e.to_string(),
                    })?;
                    events.push(event);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_error(path, e)),
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        Ok((
            Journal {
                file,
                path: path.to_path_buf(),
            },
            events,
        ))
    }

    pub fn append(&mut self, event: &JournalEvent) -> Result<(), RegistryError> {
        let mut line = serde_json::to_vec(event).expect("journal events serialize");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| io_error(&self.path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> RegistryError {
    RegistryError::Io(format!("{}: {e}", path.display()))
}
