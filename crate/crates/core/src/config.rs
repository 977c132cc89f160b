//! Server configuration file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::Role;

pub const DEFAULT_MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A statically configured API credential.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeed {
    pub token: String,
    pub name: String,
    pub role: Role,
}

impl std::fmt::Debug for TokenSeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenSeed")
            .field("name", &self.name)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub listen_addr: String,
    pub datasets_root: PathBuf,
    pub journal_path: PathBuf,
    pub audit_path: PathBuf,
    pub tokens: Vec<TokenSeed>,
    #[serde(default = "default_max_body")]
    pub max_body_bytes: usize,
}

fn default_max_body() -> usize {
    DEFAULT_MAX_BODY_BYTES
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ServerConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let paths = [&self.datasets_root, &self.journal_path, &self.audit_path];
        if paths.iter().collect::<HashSet<_>>().len() != paths.len() {
            return Err(ConfigError::Invalid(
                "datasets_root, journal_path and audit_path must be distinct".into(),
            ));
        }
        if self.max_body_bytes == 0 {
            return Err(ConfigError::Invalid("max_body_bytes must be positive".into()));
        }
        let mut seen = HashSet::new();
        for seed in &self.tokens {
            if seed.token.is_empty() {
                return Err(ConfigError::Invalid(format!("empty token for {:?}", seed.name)));
            }
            if !seen.insert(&seed.token) {
                return Err(ConfigError::Invalid(format!("token for {:?} is not unique", seed.name)));
            }
        }
        Ok(())
    }
}
