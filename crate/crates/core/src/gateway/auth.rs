//! Bearer-token authentication and the role table.

use std::collections::HashMap;
use std::fmt;

use axum::http::{HeaderMap, Method};
use serde::{Deserialize, Serialize};

use crate::config::TokenSeed;

/// Access levels. Each role holds every grant of the roles below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Viewer,
    Inspector,
    Admin,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Viewer, Role::Inspector, Role::Admin];

    pub fn grants(self, required: Role) -> bool {
        self >= required
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Viewer => "viewer",
            Role::Inspector => "inspector",
            Role::Admin => "admin",
        })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Principal {
    pub name: String,
    pub role: Role,
    token: String,
}

impl fmt::Debug for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Principal")
            .field("name", &self.name)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    by_token: HashMap<String, Principal>,
}

impl TokenTable {
    pub fn new(seeds: &[TokenSeed]) -> Self {
        let by_token = seeds
            .iter()
            .map(|s| {
                (
                    s.token.clone(),
                    Principal {
                        name: s.name.clone(),
                        role: s.role,
                        token: s.token.clone(),
                    },
                )
            })
            .collect();
        TokenTable { by_token }
    }

    /// Resolves `Authorization: Bearer <token>`. Anything else yields `None`.
    pub fn authenticate(&self, headers: &HeaderMap) -> Option<&Principal> {
        let value = headers.get(axum::http::header::AUTHORIZATION)?.to_str().ok()?;
        let (scheme, token) = value.split_once(' ')?;
        if !scheme.eq_ignore_ascii_case("bearer") {
            return None;
        }
        self.by_token.get(token.trim())
    }
}

/// Minimum role per endpoint, keyed by method and route template.
pub const ACCESS_TABLE: &[(&str, &str, Role)] = &[
    ("GET", "/api/v1/models", Role::Viewer),
    ("POST", "/api/v1/models", Role::Admin),
    ("POST", "/api/v1/models/{model_id}/versions/{version}/validate", Role::Admin),
    ("POST", "/api/v1/models/{model_id}/versions/{version}/promote", Role::Admin),
    ("POST", "/api/v1/models/{model_id}/rollback", Role::Admin),
    ("GET", "/api/v1/datasets", Role::Viewer),
    ("POST", "/api/v1/datasets", Role::Admin),
    ("GET", "/api/v1/datasets/{dataset_id}", Role::Viewer),
    ("GET", "/api/v1/datasets/{dataset_id}/scans/{scan_id}", Role::Viewer),
    ("POST", "/api/v1/infer", Role::Inspector),
    ("GET", "/api/v1/audit", Role::Admin),
    ("GET", "/api/v1/schema/inference-outcome", Role::Viewer),
];

pub fn required_role(method: &Method, template: &str) -> Option<Role> {
    ACCESS_TABLE
        .iter()
        .find(|(m, t, _)| *m == method.as_str() && *t == template)
        .map(|&(_, _, role)| role)
}
