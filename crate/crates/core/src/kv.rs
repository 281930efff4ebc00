//! Flat `key = value` text files.
//!
//! Used for the CLI configuration file and the mock/toy component configs.
//! Blank lines and lines starting with `#` are ignored. Keys may repeat;
//! callers decide whether the last one wins.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("{origin}:{line}: expected `key = value`, got {text:?}")]
    Syntax {
        origin: String,
        line: usize,
        text: String,
    },
    #[error("{origin}:{line}: bad value for `{key}`: {reason}")]
    Value {
        origin: String,
        line: usize,
        key: String,
        reason: String,
    },
    #[error("{origin}:{line}: unknown key `{key}`")]
    UnknownKey {
        origin: String,
        line: usize,
        key: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    pub origin: String,
    pub entries: Vec<Entry>,
}

impl KvFile {
    pub fn parse(origin: impl Into<String>, text: &str) -> Result<Self, KvError> {
        let origin = origin.into();
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(KvError::Syntax {
                    origin,
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::Syntax {
                    origin,
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            entries.push(Entry {
                line: i + 1,
                key: key.to_string(),
                value: value.trim().to_string(),
            });
        }
        Ok(Self { origin, entries })
    }

    pub fn read(path: &Path) -> Result<Self, KvError> {
        let text = std::fs::read_to_string(path).map_err(|source| KvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(path.display().to_string(), &text)
    }

    /// Parses an entry's value, attaching the location on failure.
    pub fn value<T>(&self, entry: &Entry) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        entry
            .value
            .parse()
            .map_err(|e: T::Err| self.bad_value(entry, e.to_string()))
    }

    pub fn bad_value(&self, entry: &Entry, reason: impl Into<String>) -> KvError {
        KvError::Value {
            origin: self.origin.clone(),
            line: entry.line,
            key: entry.key.clone(),
            reason: reason.into(),
        }
    }

    pub fn unknown(&self, entry: &Entry) -> KvError {
        KvError::UnknownKey {
            origin: self.origin.clone(),
            line: entry.line,
            key: entry.key.clone(),
        }
    }
}

/// Splits a comma-separated list, dropping empty items.
pub fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}
