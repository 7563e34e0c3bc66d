//! The `#meta key=value ...` header shared by every file format.

use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum MetaError {
    #[error("empty file, expected a `#meta` header")]
    Missing,
    #[error("expected a `#meta` header, found {0:?}")]
    NotAHeader(String),
    #[error("malformed header entry {0:?}, expected key=value")]
    Entry(String),
    #[error("header key `{0}` appears twice")]
    Duplicate(String),
    #[error("header is missing `{0}`")]
    Absent(&'static str),
    #[error("header value {key}={value:?} is invalid")]
    Value { key: &'static str, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta(BTreeMap<String, String>);

impl Meta {
    pub fn parse(line: &str) -> Result<Self, MetaError> {
        let rest = line
            .strip_prefix("#meta")
            .filter(|r| r.is_empty() || r.starts_with(char::is_whitespace))
            .ok_or_else(|| MetaError::NotAHeader(line.to_owned()))?;
        let mut map = BTreeMap::new();
        for entry in rest.split_whitespace() {
            let (k, v) = entry
                .split_once('=')
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| MetaError::Entry(entry.to_owned()))?;
            if map.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(MetaError::Duplicate(k.to_owned()));
            }
        }
        Ok(Self(map))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn required<T: FromStr>(&self, key: &'static str) -> Result<T, MetaError> {
        let value = self.raw(key).ok_or(MetaError::Absent(key))?;
        value.parse().map_err(|_| MetaError::Value { key, value: value.to_owned() })
    }

    /// Absent keys and the literal `none` both read as `None`.
    pub fn optional<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, MetaError> {
        match self.raw(key) {
            None | Some("none") => Ok(None),
            Some(value) => value.parse().map(Some).map_err(|_| MetaError::Value { key, value: value.to_owned() }),
        }
    }
}
