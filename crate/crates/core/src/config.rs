//! `key = value` configuration files.
//!
//! Files are TOML restricted to top-level keys: numbers and booleans are
//! written bare, strings quoted, `#` starts a comment. Unknown keys are
//! rejected so typos surface as errors instead of silently using defaults.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
}

pub fn read_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Applies `key=value` overrides (as given on a command line) on top of a
/// config value.
pub fn apply_overrides<T>(base: &T, overrides: &[String]) -> Result<T>
where
    T: serde::Serialize + DeserializeOwned,
{
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    for item in overrides {
        let Some((key, value)) = item.split_once('=') else {
            return Err(Error::Config(format!("override `{item}` is not key=value")));
        };
        let parsed: toml::Table = format!("v = {value}")
            .parse()
            .or_else(|_| format!("v = {:?}", value.trim()).parse())
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        table.insert(key.trim().to_string(), parsed["v"].clone());
    }
    table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}
