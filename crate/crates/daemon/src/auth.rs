use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

/// API privilege, ordered `Viewer < Operator < Admin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Viewer,
    Operator,
    Admin,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Viewer => "viewer",
            Role::Operator => "operator",
            Role::Admin => "admin",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "viewer" => Ok(Role::Viewer),
            "operator" => Ok(Role::Operator),
            "admin" => Ok(Role::Admin),
            _ => Err(format!("unknown role {s:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum TokenFileError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Static bearer tokens loaded from a `token<TAB>role` file.
#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    roles: HashMap<String, Role>,
}

impl TokenTable {
    pub fn parse(text: &str) -> Result<Self, TokenFileError> {
        let mut roles = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |reason: String| TokenFileError::Malformed { line: i + 1, reason };
            let (token, role) = line.split_once('\t').ok_or_else(|| bad("expected token<TAB>role".into()))?;
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(bad("token must be non-empty without whitespace".into()));
            }
            let role = role.trim().parse().map_err(bad)?;
            if roles.insert(token.to_string(), role).is_some() {
                return Err(bad("duplicate token".into()));
            }
        }
        Ok(TokenTable { roles })
    }

    pub fn load(path: &Path) -> Result<Self, TokenFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Role)>) -> Self {
        TokenTable {
            roles: pairs.into_iter().map(|(t, r)| (t.to_string(), r)).collect(),
        }
    }

    pub fn role_of(&self, token: &str) -> Option<Role> {
        self.roles.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Role for an `Authorization` header value; `None` when absent or unknown.
    pub fn authorize(&self, header: Option<&str>) -> Option<Role> {
        let token = header?.strip_prefix("Bearer ")?.trim();
        self.role_of(token)
    }
}
