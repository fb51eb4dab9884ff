//! Versioned JSON documents with field-path error reporting.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum SchemaError {
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error("schema violation at `{path}`: {msg}")]
    SchemaViolation { path: String, msg: String },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
}

impl SchemaError {
    pub fn path(&self) -> Option<&str> {
        match self {
            SchemaError::SchemaViolation { path, .. } => Some(path),
            SchemaError::VersionMismatch { .. } => Some("version"),
            SchemaError::Syntax(_) => None,
        }
    }

    fn violation(path: impl Into<String>, msg: impl Into<String>) -> Self {
        SchemaError::SchemaViolation {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

/// Parses a document whose top level is an object carrying a mandatory
/// integer `version` equal to `expected`.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, expected: u64) -> Result<T, SchemaError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| SchemaError::Syntax(e.to_string()))?;
    let Value::Object(map) = &value else {
        return Err(SchemaError::violation("", "top level must be an object"));
    };
    match map.get("version") {
        None => return Err(SchemaError::violation("version", "missing field `version`")),
        Some(v) => match v.as_u64() {
            Some(found) if found == expected => {}
            Some(found) => return Err(SchemaError::VersionMismatch { found, expected }),
            None => {
                return Err(SchemaError::violation(
                    "version",
                    "must be a non-negative integer",
                ))
            }
        },
    }
    serde_path_to_error::deserialize(value).map_err(|err| {
        let mut path = err.path().to_string();
        if path == "." {
            path.clear();
        }
        let msg = err.inner().to_string();
        if let Some(field) = missing_field(&msg) {
            if !path.is_empty() {
                path.push('.');
            }
            path.push_str(field);
        }
        SchemaError::SchemaViolation { path, msg }
    })
}

fn missing_field(msg: &str) -> Option<&str> {
    let rest = msg.strip_prefix("missing field `")?;
    rest.split('`').next()
}

/// Pretty-printed JSON with a trailing newline. Floats are written in the
/// shortest form that parses back to the same bits.
pub fn to_document<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}
